//! Matrix model of the whole link and MMSE detection.
//!
//! With `d` the stacked `M_d×N` grid (`d[l + k·M_d]`), the transmitter is
//!
//! ```text
//! x = A_cp · O · (I_N ⊗ W·C) · (F_Nᴴ ⊗ I_γ) · Γ · d,   Γ = blkdiag_k(P_k·U)
//! ```
//!
//! where `P_k = P ⊙ E_k` for ODDM and `P_k = P` otherwise, `C` is the
//! CE-after-PS block extension and `W` the edge window. The receiver slices
//! windows (`O_rx`), drops the CP (`R_cp`), transforms across blocks and
//! matched filters: `d̃ = Γᴴ·(F_N ⊗ I_γ)·O_rx·R_cp·r`. So
//!
//! ```text
//! H_eff = Γᴴ (F_N ⊗ I_γ) O_rx 𝓗 O (I_N ⊗ W·C) (F_Nᴴ ⊗ I_γ) Γ,   𝓗 = R_cp H A_cp
//! ```
//!
//! [`StructuredMatrices`] assembles every factor densely and is meant for
//! small grids. [`build_heff`] obtains the same matrix column by column from
//! the sample-level modem and channel, which is what the BER runs use.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::channel::{apply_channel, ChannelRealization};
use crate::config::{GuardMode, ModemConfig, Technique};
use crate::dft::cis;
use crate::error::{bail, Error};
use crate::grid::{DelayDopplerGrid, SampleStream};
use crate::linalg::{gram, matmul, matvec_adjoint, Cholesky};
use crate::modem::{DirectModem, FrameGeometry};
use crate::pulse::PulsePrototype;
use crate::transforms::cp_add;
use crate::{CMatrix, Result, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Every factor of the transmit/receive chain as a dense matrix.
#[derive(Clone, Debug)]
pub struct StructuredMatrices {
    pub technique: Technique,
    pub geometry: FrameGeometry,
    /// `M'_d×M_d` upsampler `I_{M_d} ⊗ [1, 0, …, 0]ᵀ`.
    pub u: CMatrix,
    /// `γ×M'_d` pulse matrix: circulant (C-PS) or Toeplitz (L-PS, ODDM).
    pub p: CMatrix,
    /// ODDM only: `Ē` with blocks `E_k·U` shaped like `Γ`, so that
    /// `Γ_ODDM = Γ_L ⊙ Ē`.
    pub e_bar: Option<CMatrix>,
    /// `Nγ×NM_d` block-diagonal shaping.
    pub gamma: CMatrix,
    /// `γ_tx×γ` per-block post-shaping map `W·C` (identity without CE).
    pub post: CMatrix,
    /// `ξ'×Nγ_tx` overlap-add.
    pub o: CMatrix,
    /// `Nγ×ξ'` receive-window selection.
    pub o_rx: CMatrix,
    /// `(ξ'+L'_cp)×ξ'` and its left inverse.
    pub a_cp: CMatrix,
    pub r_cp: CMatrix,
    /// Unitary `N`-point DFT.
    pub f_n: CMatrix,
}

/// Pulse matrix `P` for a technique: `circ{p}` over `M'` or the
/// `γ'×M'` Toeplitz matrix of the linear pulse.
pub fn pulse_matrix(technique: Technique, pulse: &PulsePrototype) -> CMatrix {
    let mp = pulse.m_prime();
    match technique {
        Technique::Cps => CMatrix::from_fn(mp, mp, |r, c| C64::new(pulse.circular(r as isize - c as isize), 0.0)),
        Technique::Lps | Technique::Oddm => {
            let g = pulse.linear_block_len();
            CMatrix::from_fn(g, mp, |r, c| C64::new(pulse.tap(r as isize + pulse.origin - c as isize), 0.0))
        }
    }
}

/// `E_k[r, c] = e^{j2πk(r + origin − c)/(M'N)}`, Toeplitz in the lag.
pub fn doppler_matrix(pulse: &PulsePrototype, k: usize, n: usize) -> CMatrix {
    let mp = pulse.m_prime();
    let period = (mp * n) as f64;
    CMatrix::from_fn(pulse.linear_block_len(), mp, |r, c| {
        cis(2.0 * PI * (k as isize * (r as isize + pulse.origin - c as isize)) as f64 / period)
    })
}

/// Unitary DFT matrix `F[a, b] = e^{−j2πab/N}/√N`.
pub fn dft_matrix(n: usize) -> CMatrix {
    let s = 1.0 / libm::sqrt(n as f64);
    CMatrix::from_fn(n, n, |a, b| cis(-2.0 * PI * ((a * b) % n) as f64 / n as f64) * s)
}

/// `A ⊗ I_b`.
fn kron_identity(a: &CMatrix, b: usize) -> CMatrix {
    let (r, c) = a.shape();
    let mut out = CMatrix::zeros(r * b, c * b);
    for i in 0..r {
        for j in 0..c {
            for t in 0..b {
                out[(i * b + t, j * b + t)] = a[(i, j)];
            }
        }
    }
    out
}

fn block_diag(blocks: &[CMatrix]) -> CMatrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Assembles all factors for `cfg`; `pulse` must be the configuration's
/// shaping pulse (see [`crate::modem::pulse_for`]).
pub fn build_structured(cfg: &ModemConfig, pulse: &PulsePrototype) -> Result<StructuredMatrices> {
    cfg.validate()?;
    if pulse.m != cfg.m_d() || pulse.l_us != cfg.l_us {
        bail!(Dimension, "pulse designed for M = {}, L_us = {}; configuration shapes M_d = {}, L_us = {}", pulse.m, pulse.l_us, cfg.m_d(), cfg.l_us);
    }
    let geometry = FrameGeometry::of(cfg, pulse);
    let (md, n, l_us) = (cfg.m_d(), cfg.n, cfg.l_us);
    let mp = md * l_us;
    let u = CMatrix::from_fn(mp, md, |r, c| if r == c * l_us { ONE } else { ZERO });
    let p = pulse_matrix(cfg.technique, pulse);
    let gamma_len = p.nrows();
    let pu = matmul(&p, &u);
    let (gamma, e_bar) = if cfg.technique == Technique::Oddm {
        let e_blocks: Vec<CMatrix> = (0..n).map(|k| matmul(&doppler_matrix(pulse, k, n), &u)).collect();
        let blocks: Vec<CMatrix> = e_blocks.iter().map(|e| pu.component_mul(e)).collect();
        (block_diag(&blocks), Some(block_diag(&e_blocks)))
    } else {
        (block_diag(&vec![pu; n]), None)
    };

    // Per-block post map: CE-after extension, then the window.
    let gamma_tx = geometry.gamma_tx;
    let mut post = if cfg.guard.mode == GuardMode::CeAfterPs {
        let head = cfg.guard.head() * l_us;
        CMatrix::from_fn(gamma_tx, gamma_len, |r, c| if (r + gamma_len - head % gamma_len) % gamma_len == c { ONE } else { ZERO })
    } else {
        CMatrix::identity(gamma_tx, gamma_len)
    };
    if cfg.guard.mode.is_ce() && cfg.guard.length > 0 {
        let w = crate::pulse::rc_window(cfg.guard.beta, cfg.m, l_us);
        for (r, &t) in w.taps.iter().enumerate().take(gamma_tx) {
            for c in 0..gamma_len {
                post[(r, c)] *= t;
            }
        }
    }

    let xi = geometry.core_len;
    let mut o = CMatrix::zeros(xi, n * gamma_tx);
    for b in 0..n {
        for i in 0..gamma_tx {
            o[(b * geometry.stride + i, b * gamma_tx + i)] = ONE;
        }
    }
    let mut o_rx = CMatrix::zeros(n * geometry.gamma_rx, xi);
    for b in 0..n {
        for i in 0..geometry.gamma_rx {
            let at = (b * geometry.stride + i) as isize + geometry.rx_origin - geometry.tx_origin;
            if at >= 0 && (at as usize) < xi {
                o_rx[(b * geometry.gamma_rx + i, at as usize)] = ONE;
            }
        }
    }
    let cp = geometry.cp;
    let a_cp = CMatrix::from_fn(xi + cp, xi, |r, c| if (r + xi - cp) % xi == c { ONE } else { ZERO });
    let r_cp = CMatrix::from_fn(xi, xi + cp, |r, c| if c == r + cp { ONE } else { ZERO });
    Ok(StructuredMatrices {
        technique: cfg.technique,
        geometry,
        u,
        p,
        e_bar,
        gamma,
        post,
        o,
        o_rx,
        a_cp,
        r_cp,
        f_n: dft_matrix(n),
    })
}

impl StructuredMatrices {
    fn gamma_len(&self) -> usize {
        self.p.nrows()
    }

    /// Core transmitter `O (I_N ⊗ W·C) (F_Nᴴ ⊗ I_γ) Γ` (`ξ'×NM_d`).
    pub fn tx_matrix(&self) -> CMatrix {
        let n = self.geometry.n;
        let shaped = matmul(&kron_identity(&self.f_n.adjoint(), self.gamma_len()), &self.gamma);
        let posted = matmul(&block_diag(&vec![self.post.clone(); n]), &shaped);
        matmul(&self.o, &posted)
    }

    /// Receiver from the CP-stripped core, `Γᴴ (F_N ⊗ I_γ) O_rx` (`NR×ξ'`).
    pub fn rx_matrix(&self) -> CMatrix {
        let t = matmul(&kron_identity(&self.f_n, self.gamma_len()), &self.o_rx);
        matmul(&self.gamma.adjoint(), &t)
    }

    /// Oversampled channel matrix `H` over the CP-extended frame:
    /// `H[a, b] = h[κ'_a, κ'_a − κ'_b]`.
    pub fn channel_matrix(&self, ch: &ChannelRealization) -> Result<CMatrix> {
        let g = &self.geometry;
        if ch.max_delay() > g.cp {
            return Err(Error::CpTooShort { spread: ch.max_delay(), cp: g.cp });
        }
        let len = g.core_len + g.cp;
        let start = g.tx_origin - g.cp as isize;
        let mut h = CMatrix::zeros(len, len);
        for a in 0..len {
            for i in 0..=ch.max_delay().min(a) {
                h[(a, a - i)] = ch.h(start + a as isize, i);
            }
        }
        Ok(h)
    }

    /// `𝓗 = R_cp H A_cp`.
    pub fn channel_core(&self, ch: &ChannelRealization) -> Result<CMatrix> {
        Ok(matmul(&self.r_cp, &matmul(&self.channel_matrix(ch)?, &self.a_cp)))
    }

    /// Transmit samples for a stacked grid, CP included.
    pub fn modulate(&self, d: &[C64]) -> Result<SampleStream> {
        let t = self.tx_matrix();
        if d.len() != t.ncols() {
            bail!(Dimension, "stacked grid has {} entries, matrices expect {}", d.len(), t.ncols());
        }
        let x = matmul(&self.a_cp, &t) * CMatrix::from_column_slice(d.len(), 1, d);
        Ok(SampleStream {
            samples: x.as_slice().to_vec(),
            start_index: self.geometry.tx_origin - self.geometry.cp as isize,
            rate_factor: self.u.nrows() / self.u.ncols(),
        })
    }

    /// Delay-time equivalent channel `(I_N ⊗ Γ₀ᴴ) O_rx 𝓗 O (I_N ⊗ W·C·Γ₀)`
    /// for C-PS and L-PS, where `H_eff = (F_N ⊗ I) H_DT (F_Nᴴ ⊗ I)`.
    pub fn delay_time_channel(&self, ch: &ChannelRealization) -> Result<CMatrix> {
        if self.technique == Technique::Oddm {
            bail!(Unsupported, "ODDM shapes each Doppler bin differently; no delay-time factorization");
        }
        let n = self.geometry.n;
        let g0 = matmul(&self.p, &self.u);
        let tx = matmul(&self.o, &block_diag(&vec![matmul(&self.post, &g0); n]));
        let rx = matmul(&block_diag(&vec![g0.adjoint(); n]), &self.o_rx);
        Ok(matmul(&rx, &matmul(&self.channel_core(ch)?, &tx)))
    }
}

/// `H_eff` plus the covariance of the filtered noise for unit `σ²_η`.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveChannelMatrix {
    pub h_eff: CMatrix,
    /// `G·Gᴴ` with `G` the receiver acting on the CP-stripped core; the noise
    /// covariance is `σ²_η` times this.
    pub noise_cov: CMatrix,
    pub technique: Technique,
}

impl EffectiveChannelMatrix {
    pub fn noise_cov_scaled(&self, sigma2: f64) -> CMatrix {
        &self.noise_cov * C64::new(sigma2, 0.0)
    }
}

/// Dense literal assembly of `H_eff`.
pub fn build_heff_dense(mats: &StructuredMatrices, ch: &ChannelRealization) -> Result<EffectiveChannelMatrix> {
    let rx = mats.rx_matrix();
    let h_eff = matmul(&rx, &matmul(&mats.channel_core(ch)?, &mats.tx_matrix()));
    Ok(EffectiveChannelMatrix { h_eff, noise_cov: gram(&rx), technique: mats.technique })
}

fn check_channel(cfg: &ModemConfig, ch: &ChannelRealization) -> Result<()> {
    let fs = cfg.sample_rate();
    if ch.l_us != cfg.l_us || libm::fabs(ch.sample_rate - fs) > 1e-9 * fs {
        bail!(
            Dimension,
            "channel drawn at L_us = {}, {} Hz; configuration runs at L_us = {}, {} Hz",
            ch.l_us,
            ch.sample_rate,
            cfg.l_us,
            fs
        );
    }
    Ok(())
}

/// Rows of the receiver-side grid.
pub fn receiver_rows(cfg: &ModemConfig) -> usize {
    match cfg.guard.mode {
        GuardMode::CeAfterPs => cfg.m,
        _ => cfg.m_d(),
    }
}

fn unit_grid(rows: usize, n: usize, j: usize) -> DelayDopplerGrid {
    let mut g = DelayDopplerGrid::zeros(rows, n);
    g.symbols[(j % rows, j / rows)] = ONE;
    g
}

/// `H_eff` column by column: each unit grid is modulated, passed through
/// the channel and demodulated by the sample-level modem.
pub fn build_heff(modem: &DirectModem, ch: &ChannelRealization) -> Result<EffectiveChannelMatrix> {
    HeffBuilder::new(modem.clone())?.build(ch)
}

/// [`build_heff`] with the channel-independent noise covariance computed
/// once, for repeated draws on one configuration.
#[derive(Clone, Debug)]
pub struct HeffBuilder {
    modem: DirectModem,
    noise_cov: CMatrix,
}

impl HeffBuilder {
    pub fn new(modem: DirectModem) -> Result<Self> {
        let noise_cov = noise_covariance(&modem)?;
        Ok(HeffBuilder { modem, noise_cov })
    }

    pub fn modem(&self) -> &DirectModem {
        &self.modem
    }

    pub fn noise_cov(&self) -> &CMatrix {
        &self.noise_cov
    }

    pub fn build(&self, ch: &ChannelRealization) -> Result<EffectiveChannelMatrix> {
        let modem = &self.modem;
        let cfg = modem.config();
        check_channel(cfg, ch)?;
        let (md, n) = (cfg.m_d(), cfg.n);
        let rows = receiver_rows(cfg);
        let cp = modem.geometry().cp;
        let mut h_eff = CMatrix::zeros(rows * n, md * n);
        for j in 0..md * n {
            let tx = modem.modulate_extended(&unit_grid(md, n, j))?;
            let rx = apply_channel(ch, &tx.stream, cp)?;
            let y = modem.demodulate(&rx)?;
            h_eff.column_mut(j).copy_from_slice(y.symbols.as_slice());
        }
        Ok(EffectiveChannelMatrix { h_eff, noise_cov: self.noise_cov.clone(), technique: cfg.technique })
    }
}

/// `G·Gᴴ` for the receiver `G` of `modem`; channel independent.
pub fn noise_covariance(modem: &DirectModem) -> Result<CMatrix> {
    let cfg = modem.config();
    let rows = receiver_rows(cfg);
    let n = cfg.n;
    let cp = modem.geometry().cp;
    let mut c = CMatrix::zeros(rows * n, rows * n);
    for j in 0..rows * n {
        let core = modem.receive_adjoint(&unit_grid(rows, n, j))?;
        let y = modem.demodulate(&cp_add(&core, cp)?)?;
        c.column_mut(j).copy_from_slice(y.symbols.as_slice());
    }
    // Symmetrize away rounding.
    let ch = c.adjoint();
    Ok((c + ch) * C64::new(0.5, 0.0))
}

/// `E_data` mapping the `M×N` data grid onto the shaped `M_d×N` grid:
/// zero-guard insertion, cyclic extension, or the identity.
pub fn data_map(cfg: &ModemConfig) -> CMatrix {
    let (m, md, n) = (cfg.m, cfg.m_d(), cfg.n);
    let head = cfg.guard.head();
    let src = |r: usize| -> Option<usize> {
        match cfg.guard.mode {
            GuardMode::ZeroGuard => (r >= head && r < head + m).then(|| r - head),
            GuardMode::CeBeforePs => Some((r + m * head - head) % m),
            GuardMode::None | GuardMode::CeAfterPs => Some(r),
        }
    };
    let mut e = CMatrix::zeros(md * n, m * n);
    for k in 0..n {
        for r in 0..md {
            if let Some(l) = src(r) {
                e[(r + k * md, l + k * m)] = ONE;
            }
        }
    }
    e
}

/// `A = H_eff·E_data` without forming the product.
pub fn data_channel(h: &EffectiveChannelMatrix, cfg: &ModemConfig) -> CMatrix {
    let e = data_map(cfg);
    if e.nrows() == e.ncols() && e == CMatrix::identity(e.nrows(), e.ncols()) {
        h.h_eff.clone()
    } else {
        matmul(&h.h_eff, &e)
    }
}

/// Noise model used by the detector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum NoiseCovariance {
    /// The exact covariance of the matched-filtered noise.
    #[default]
    Exact,
    /// `σ²I`, ignoring the colouring.
    White,
}

enum Form {
    /// `Aᴴ (AAᴴ + σ²C)⁻¹ d̃`.
    Observation { a: CMatrix },
    /// `(ÃᴴÃ)⁻¹ Ãᴴ L⁻¹d̃` with `C = LLᴴ`, `Ã = L⁻¹A`: the noiseless limit
    /// for systems with more observations than unknowns, where `AAᴴ` is
    /// singular.
    LeastSquares { a_w: CMatrix, whiten: Option<Cholesky> },
}

/// Linear MMSE detector for unit-energy symbols, factorized once and
/// reusable across observations of the same channel.
pub struct MmseEqualizer {
    form: Form,
    chol: Cholesky,
    cols: usize,
}

const PIVOT_TOL: f64 = 1e-13;

fn is_identity(c: &CMatrix, tol: f64) -> bool {
    c.is_square() && c.iter().enumerate().all(|(i, v)| {
        let (r, col) = (i % c.nrows(), i / c.nrows());
        let want = if r == col { 1.0 } else { 0.0 };
        (v - C64::new(want, 0.0)).norm() <= tol
    })
}

impl MmseEqualizer {
    /// `a` maps the unknowns to the observations; `cov` is the noise
    /// covariance per unit `σ²` (`None` for white noise).
    pub fn new(a: &CMatrix, sigma2: f64, cov: Option<&CMatrix>) -> Result<Self> {
        let (rows, cols) = a.shape();
        if rows < cols {
            bail!(Dimension, "MMSE needs at least as many observations ({rows}) as unknowns ({cols})");
        }
        if !(sigma2 >= 0.0) {
            bail!(Config, "noise variance {sigma2} must be non-negative");
        }
        let cov = cov.filter(|c| !is_identity(c, 1e-12));
        if let Some(c) = cov {
            if c.shape() != (rows, rows) {
                bail!(Dimension, "covariance is {}×{}, observations {rows}", c.nrows(), c.ncols());
            }
        }
        if rows == cols || sigma2 > 0.0 {
            let mut g = gram(a);
            match cov {
                Some(c) => g += c * C64::new(sigma2, 0.0),
                None => {
                    for i in 0..rows {
                        g[(i, i)] += sigma2;
                    }
                }
            }
            let chol = Cholesky::new(&g, PIVOT_TOL)?;
            Ok(MmseEqualizer { form: Form::Observation { a: a.clone() }, chol, cols })
        } else {
            let whiten = cov.map(|c| Cholesky::new(c, PIVOT_TOL)).transpose()?;
            let a_w = match &whiten {
                Some(l) => {
                    let mut w = a.clone();
                    for j in 0..cols {
                        let col = l.solve_lower(w.column(j).as_slice());
                        w.column_mut(j).copy_from_slice(&col);
                    }
                    w
                }
                None => a.clone(),
            };
            let chol = Cholesky::new(&gram(&a_w.adjoint()), PIVOT_TOL)?;
            Ok(MmseEqualizer { form: Form::LeastSquares { a_w, whiten }, chol, cols })
        }
    }

    pub fn unknowns(&self) -> usize {
        self.cols
    }

    pub fn equalize(&self, observed: &[C64]) -> Result<Vec<C64>> {
        match &self.form {
            Form::Observation { a } => {
                if observed.len() != a.nrows() {
                    bail!(Dimension, "{} observations, detector expects {}", observed.len(), a.nrows());
                }
                Ok(matvec_adjoint(a, &self.chol.solve(observed)))
            }
            Form::LeastSquares { a_w, whiten } => {
                if observed.len() != a_w.nrows() {
                    bail!(Dimension, "{} observations, detector expects {}", observed.len(), a_w.nrows());
                }
                let y = match whiten {
                    Some(l) => l.solve_lower(observed),
                    None => observed.to_vec(),
                };
                Ok(self.chol.solve(&matvec_adjoint(a_w, &y)))
            }
        }
    }
}

/// One-shot `d̂ = Hᴴ(HHᴴ + σ²C)⁻¹d̃` (or its tall-system equivalent).
pub fn mmse_equalize(h: &CMatrix, observed: &[C64], sigma2: f64, cov: Option<&CMatrix>) -> Result<Vec<C64>> {
    MmseEqualizer::new(h, sigma2, cov)?.equalize(observed)
}

/// Detector for the data grid of `cfg` from the receiver-side grid.
pub fn grid_equalizer(
    heff: &EffectiveChannelMatrix,
    cfg: &ModemConfig,
    sigma2: f64,
    covariance: NoiseCovariance,
) -> Result<MmseEqualizer> {
    let a = data_channel(heff, cfg);
    let cov = match covariance {
        NoiseCovariance::Exact => Some(&heff.noise_cov),
        NoiseCovariance::White => None,
    };
    MmseEqualizer::new(&a, sigma2, cov)
}

/// Applies a [`grid_equalizer`] to a demodulated grid, returning `M×N` data.
pub fn equalize_grid(eq: &MmseEqualizer, observed: &DelayDopplerGrid, cfg: &ModemConfig) -> Result<DelayDopplerGrid> {
    let d = eq.equalize(&observed.to_vector())?;
    if d.len() != cfg.m * cfg.n {
        return Err(Error::Dimension(format!("detector returned {} symbols, data grid has {}", d.len(), cfg.m * cfg.n)));
    }
    Ok(DelayDopplerGrid::from_vector(cfg.m, cfg.n, &d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_channel, ChannelSpec};
    use crate::config::GuardConfig;
    use crate::linalg::matvec;
    use crate::modem::pulse_for;

    fn cfg(t: Technique, m: usize, n: usize, l_us: usize, q: Option<usize>) -> ModemConfig {
        ModemConfig { m, n, l_us, q, l_cp: 4, ..ModemConfig::reference() }.with_technique(t)
    }

    fn grid(m: usize, n: usize, seed: u64) -> Vec<C64> {
        let mut s = seed;
        (0..m * n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let a = (s >> 62) as f64;
                C64::new(if a >= 2.0 { 1.0 } else { -1.0 }, if a as u64 % 2 == 1 { 1.0 } else { -1.0 })
            })
            .collect()
    }

    fn max_err(a: &[C64], b: &[C64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn structure_invariants() {
        let c = cfg(Technique::Cps, 4, 2, 2, None);
        let p = pulse_for(&c).unwrap();
        let s = build_structured(&c, &p).unwrap();
        assert!((s.u.adjoint() * &s.u - CMatrix::identity(4, 4)).norm() < 1e-15);
        assert!((&s.f_n * s.f_n.adjoint() - CMatrix::identity(2, 2)).norm() < 1e-12);
        for j in 0..8 {
            assert!((s.p[(j, 0)].re - p.circular(j as isize)).abs() < 1e-15);
        }
        // No overlap for C-PS: OᵀO = I.
        assert!((s.o.transpose() * &s.o - CMatrix::identity(16, 16)).norm() < 1e-15);
        let one = cfg(Technique::Cps, 4, 2, 1, None);
        let s1 = build_structured(&ModemConfig { alpha: 0.0, ..one.clone() }, &pulse_for(&ModemConfig { alpha: 0.0, ..one }).unwrap()).unwrap();
        assert_eq!(s1.u, CMatrix::identity(4, 4));
    }

    #[test]
    fn oddm_gamma_is_lps_gamma_times_e_bar() {
        let c = cfg(Technique::Oddm, 8, 4, 2, Some(3));
        let p = pulse_for(&c).unwrap();
        let oddm = build_structured(&c, &p).unwrap();
        let lps = build_structured(&c.clone().with_technique(Technique::Lps), &p).unwrap();
        let e = oddm.e_bar.as_ref().unwrap();
        assert!((lps.gamma.component_mul(e) - &oddm.gamma).norm() < 1e-13);
        // k = 0 block is the L-PS block.
        let (r, c0) = (p.linear_block_len(), 8);
        assert!((oddm.gamma.view((0, 0), (r, c0)) - lps.gamma.view((0, 0), (r, c0))).norm() < 1e-15);
    }

    #[test]
    fn matrix_modulate_matches_modems() {
        for (t, q) in [(Technique::Cps, None), (Technique::Lps, Some(2)), (Technique::Oddm, Some(2)), (Technique::Lps, None)] {
            let c = cfg(t, 8, 4, 2, q);
            let modem = DirectModem::new(&c).unwrap();
            let s = build_structured(&c, modem.pulse()).unwrap();
            let d = grid(8, 4, 7);
            let want = modem.modulate(&DelayDopplerGrid::from_vector(8, 4, &d)).unwrap().stream;
            let got = s.modulate(&d).unwrap();
            assert_eq!(got.start_index, want.start_index);
            assert!(max_err(&got.samples, &want.samples) < 1e-12, "{t:?}");
        }
    }

    #[test]
    fn channel_matrix_matches_apply_channel() {
        let c = cfg(Technique::Lps, 8, 4, 2, Some(2));
        let modem = DirectModem::new(&c).unwrap();
        let s = build_structured(&c, modem.pulse()).unwrap();
        let ch = ChannelRealization {
            paths: vec![
                crate::channel::ChannelPath { delay: 0, gain: C64::new(0.8, 0.1), doppler_hz: 3000.0 },
                crate::channel::ChannelPath { delay: 5, gain: C64::new(-0.2, 0.5), doppler_hz: -12000.0 },
            ],
            ..ChannelRealization::ideal(c.sample_rate(), 2)
        };
        let x = modem.modulate(&DelayDopplerGrid::from_vector(8, 4, &grid(8, 4, 1))).unwrap().stream;
        let want = apply_channel(&ch, &x, s.geometry.cp).unwrap();
        let got = matvec(&s.channel_matrix(&ch).unwrap(), &x.samples);
        assert!(max_err(&got, &want.samples) < 1e-11);
    }

    fn eva(c: &ModemConfig, seed: u64) -> ChannelRealization {
        let spec = ChannelSpec { bandwidth_hz: 1.0 / c.delta_tau, ..ChannelSpec::reference() };
        generate_channel(&spec, c.l_us, seed).unwrap()
    }

    #[test]
    fn dense_and_columnwise_heff_agree_with_chain() {
        let guards = [
            GuardConfig::none(),
            GuardConfig::zero_guard(2),
            GuardConfig::cyclic_extension(GuardMode::CeBeforePs, 2, 8),
            GuardConfig::cyclic_extension(GuardMode::CeAfterPs, 2, 8),
        ];
        for t in Technique::ALL {
            for g in guards {
                if g.mode.is_ce() && t != Technique::Cps {
                    continue;
                }
                let c = ModemConfig { l_cp: 12, ..cfg(t, 8, 4, 2, t.is_linear().then_some(2)) }.with_guard(g);
                let modem = DirectModem::new(&c).unwrap();
                let s = build_structured(&c, modem.pulse()).unwrap();
                let ch = eva(&c, 11);
                let dense = build_heff_dense(&s, &ch).unwrap();
                let cols = build_heff(&modem, &ch).unwrap();
                assert!((&dense.h_eff - &cols.h_eff).norm() < 1e-10, "{t:?} {:?}", g.mode);
                assert!((&dense.noise_cov - &cols.noise_cov).norm() < 1e-10, "{t:?} {:?}", g.mode);
                let d = grid(c.m_d(), 4, 5);
                let tx = modem.modulate_extended(&DelayDopplerGrid::from_vector(c.m_d(), 4, &d)).unwrap();
                let y = modem.demodulate(&apply_channel(&ch, &tx.stream, s.geometry.cp).unwrap()).unwrap();
                assert!(max_err(&matvec(&dense.h_eff, &d), &y.to_vector()) < 1e-10);
            }
        }
    }

    #[test]
    fn delay_time_factorization() {
        for (t, q) in [(Technique::Cps, None), (Technique::Lps, Some(2))] {
            let c = ModemConfig { l_cp: 12, ..cfg(t, 8, 4, 2, q) };
            let s = build_structured(&c, &pulse_for(&c).unwrap()).unwrap();
            let ch = eva(&c, 2);
            let h_dt = s.delay_time_channel(&ch).unwrap();
            let f = kron_identity(&s.f_n, 8);
            let via_dt = &f * h_dt * f.adjoint();
            assert!((via_dt - build_heff_dense(&s, &ch).unwrap().h_eff).norm() < 1e-10);
        }
    }

    #[test]
    fn ideal_cps_heff_is_identity() {
        let c = cfg(Technique::Cps, 8, 4, 2, None);
        let modem = DirectModem::new(&c).unwrap();
        let h = build_heff(&modem, &ChannelRealization::ideal(c.sample_rate(), 2)).unwrap();
        assert!((&h.h_eff - CMatrix::identity(32, 32)).norm() < 1e-9);
        assert!((&h.noise_cov - CMatrix::identity(32, 32)).norm() < 1e-9);
    }

    #[test]
    fn mmse_limits() {
        let d: Vec<C64> = grid(4, 2, 3);
        let id = CMatrix::identity(8, 8);
        assert!(max_err(&mmse_equalize(&id, &d, 0.0, None).unwrap(), &d) < 1e-14);
        let h = CMatrix::from_fn(8, 8, |r, c| if r == c { C64::new(2.0, 0.0) } else { C64::new(0.1 * (r + 2 * c) as f64 % 0.3, 0.05) });
        let y = matvec(&h, &d);
        assert!(max_err(&mmse_equalize(&h, &y, 0.0, None).unwrap(), &d) < 1e-8);
        // Tall system, σ² = 0: least squares recovers exactly.
        let tall = CMatrix::from_fn(10, 8, |r, c| h[(r % 8, c)] + if r >= 8 { C64::new(0.3, 0.0) } else { ZERO });
        let y = matvec(&tall, &d);
        assert!(max_err(&mmse_equalize(&tall, &y, 0.0, None).unwrap(), &d) < 1e-8);
        let cov = CMatrix::from_fn(10, 10, |r, c| if r == c { C64::new(1.0, 0.0) } else if r.abs_diff(c) == 1 { C64::new(0.2, 0.0) } else { ZERO });
        assert!(max_err(&mmse_equalize(&tall, &y, 0.0, Some(&cov)).unwrap(), &d) < 1e-8);
    }

    #[test]
    fn geometry_mismatch_is_an_error() {
        let c = cfg(Technique::Cps, 8, 4, 2, None);
        let modem = DirectModem::new(&c).unwrap();
        assert!(build_heff(&modem, &ChannelRealization::ideal(c.sample_rate(), 4)).is_err());
    }
}
