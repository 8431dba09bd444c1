//! FFT-based modem structures with complex-multiplication accounting, and
//! the closed-form cost model they are checked against.
//!
//! Cost model: an `L`-point radix-2 transform costs `(L/2)·log2 L` CMs; a
//! real pulse coefficient times a complex sample costs ½ CM. Shaping stages
//! charge the model's roll-off term (`⌈αM⌉` for C-PS, `⌈2αM⌉` for the
//! linear structures) and separately record what they actually execute.
//!
//! Alongside the fast structures this module carries the two counted
//! reference structures of the cost table: the polyphase direct C/L-PS
//! shaper and the per-symbol ODDM shaper.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::config::{ModemConfig, Technique};
use crate::dft::{cis, CmCount, CmCounter, Fft};
use crate::error::bail;
use crate::grid::{DelayDopplerGrid, DelayTimeGrid, SampleStream};
use crate::modem::{DirectModem, ModemOutput};
use crate::transforms::{dft_rows, serialize};
use crate::{CMatrix, Result, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Which row of the cost table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Implementation {
    /// Polyphase time-domain shaping (C-PS and L-PS).
    Direct,
    /// Per-symbol ODDM shaping with `N`-block modulated pulses.
    ReferenceOddm,
    /// The FFT / fast-convolution structures.
    Fast,
}

impl Implementation {
    pub fn name(self) -> &'static str {
        match self {
            Implementation::Direct => "direct",
            Implementation::ReferenceOddm => "reference_oddm",
            Implementation::Fast => "fast",
        }
    }
}

/// Parameters entering the cost formulas.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CmParams {
    pub m: usize,
    pub n: usize,
    pub l_us: usize,
    pub q: usize,
    pub alpha: f64,
}

impl CmParams {
    /// `Q` defaults to `M/2` (the full span) when the configuration does not
    /// truncate.
    pub fn of(cfg: &ModemConfig) -> Self {
        CmParams { m: cfg.m_d(), n: cfg.n, l_us: cfg.l_us, q: cfg.q.unwrap_or(cfg.m_d() / 2), alpha: cfg.alpha }
    }
}

fn log2(v: usize) -> u64 {
    v.trailing_zeros() as u64
}

/// `⌈x⌉`, tolerant of `x` landing a rounding error above an integer.
fn ceil_count(x: f64) -> u64 {
    libm::ceil(x - 1e-9).max(0.0) as u64
}

/// Closed-form CM count of one modulator (or, dually, demodulator) call.
pub fn predict_cm(technique: Technique, imp: Implementation, p: &CmParams) -> Result<CmCount> {
    let CmParams { m, n, l_us, q, alpha } = *p;
    for (name, v) in [("M", m), ("N", n), ("L_us", l_us)] {
        if !v.is_power_of_two() {
            bail!(Config, "{name} = {v} is not a power of two");
        }
    }
    if q > m / 2 {
        bail!(Config, "Q = {q} exceeds M/2 = {}", m / 2);
    }
    let (m64, n64, l64, q64) = (m as u64, n as u64, l_us as u64, q as u64);
    let nm = n64 * m64;
    let qp = q64 * l64;
    let mp = m * l_us;
    // Everything below is in half-CM units.
    let half = match (technique, imp) {
        (Technique::Cps | Technique::Lps, Implementation::Direct) => nm * (log2(n) + qp - q64),
        (Technique::Oddm, Implementation::ReferenceOddm) => 2 * n64 * nm * (2 * qp - 2 * q64),
        (Technique::Cps, Implementation::Fast) => {
            nm * (log2(n) + log2(m) + l64 * log2(mp)) + n64 * ceil_count(alpha * m as f64)
        }
        (Technique::Lps, Implementation::Fast) => {
            nm * (log2(n) + 2 * log2(2 * m) + 2 * l64 * log2(2 * mp)) + n64 * ceil_count(2.0 * alpha * m as f64)
        }
        (Technique::Oddm, Implementation::Fast) => {
            2 * nm * (log2(2 * m) + l64 * log2(2 * n * mp)) + 2 * n64 * ceil_count(2.0 * alpha * m as f64)
        }
        (t, i) => bail!(Unsupported, "no {} structure for {}", i.name(), t.name()),
    };
    Ok(CmCount::from_half_cms(half))
}

/// Fast-convolution modem for one configuration. Pulse responses are
/// computed once at construction; calls are read-only afterwards.
#[derive(Clone, Debug)]
pub struct FastModem {
    base: DirectModem,
    fft_m: Fft,
    fft_mp: Fft,
    fft_2m: Fft,
    fft_2mp: Fft,
    /// C-PS: `√M·ψ̄` per `M'` bin, `None` where it is exactly one (flat band).
    cps_gain: Vec<Option<f64>>,
    /// Linear techniques: `2M'`-point responses of `p` (L-PS) or of every
    /// `p_k` (ODDM).
    responses: Vec<Vec<C64>>,
    /// Precomputation cost, excluded from per-call counts.
    precompute: CmCounter,
}

impl FastModem {
    pub fn new(cfg: &ModemConfig) -> Result<Self> {
        let base = DirectModem::new(cfg)?;
        let md = cfg.m_d();
        if !md.is_power_of_two() {
            bail!(Config, "fast structures need a power-of-two delay block, M_d = {md}");
        }
        let mp = md * cfg.l_us;
        let pulse = base.pulse();
        let mut precompute = CmCounter::new();
        let mut cps_gain = Vec::new();
        let mut responses = Vec::new();
        match cfg.technique {
            Technique::Cps => {
                let amp = 1.0 / libm::sqrt(md as f64);
                let root = libm::sqrt(md as f64);
                cps_gain = pulse.freq_taps.iter().map(|&v| (v != amp).then(|| v * root)).collect();
            }
            Technique::Lps | Technique::Oddm => {
                if pulse.left() + pulse.right() + mp > 2 * mp {
                    bail!(Config, "pulse span {} too long for {}-point fast convolution", pulse.taps.len(), 2 * mp);
                }
                let fft = Fft::new(2 * mp);
                let mut respond = |taps: &mut dyn Iterator<Item = C64>| {
                    let mut buf = vec![ZERO; 2 * mp];
                    for (i, v) in taps.enumerate() {
                        let t = (pulse.origin + i as isize).rem_euclid(2 * mp as isize) as usize;
                        buf[t] = v;
                    }
                    fft.forward(&mut buf, &mut precompute);
                    buf
                };
                if cfg.technique == Technique::Lps {
                    responses.push(respond(&mut pulse.taps.iter().map(|&v| C64::new(v, 0.0))));
                } else {
                    for pk in base.modulated() {
                        responses.push(respond(&mut pk.taps.iter().copied()));
                    }
                }
            }
        }
        Ok(FastModem {
            fft_m: Fft::new(md),
            fft_mp: Fft::new(mp),
            fft_2m: Fft::new(2 * md),
            fft_2mp: Fft::new(2 * mp),
            base,
            cps_gain,
            responses,
            precompute,
        })
    }

    pub fn config(&self) -> &ModemConfig {
        self.base.config()
    }

    pub fn direct(&self) -> &DirectModem {
        &self.base
    }

    /// One-off cost of the stored pulse responses.
    pub fn precompute_cost(&self) -> &CmCounter {
        &self.precompute
    }

    pub fn modulate(&self, data: &DelayDopplerGrid, cm: &mut CmCounter) -> Result<ModemOutput> {
        let ext = self.base.extend(data)?;
        self.modulate_extended(&ext, cm)
    }

    pub fn modulate_extended(&self, ext: &DelayDopplerGrid, cm: &mut CmCounter) -> Result<ModemOutput> {
        self.base.check_extended(ext)?;
        let blocks = match self.config().technique {
            Technique::Cps => self.cps_blocks(ext, cm),
            Technique::Lps => self.lps_blocks(ext, cm),
            Technique::Oddm => self.oddm_blocks(ext, cm),
        };
        self.base.finish(blocks)
    }

    /// Receiver-side grid, as [`DirectModem::demodulate`].
    pub fn demodulate(&self, stream: &SampleStream, cm: &mut CmCounter) -> Result<DelayDopplerGrid> {
        let y = self.base.receive_blocks(stream)?;
        Ok(match self.config().technique {
            Technique::Cps => self.cps_demod(&y, cm),
            Technique::Lps => self.lps_demod(&y, cm),
            Technique::Oddm => self.oddm_demod(&y, cm),
        })
    }

    fn charge_rolloff(&self, cm: &mut CmCounter, per_call_half: u64) {
        cm.shaping += CmCount::from_half_cms(per_call_half);
    }

    fn rolloff_half(&self, factor: f64) -> u64 {
        let c = self.config();
        ceil_count(factor * c.alpha * c.m_d() as f64)
    }

    // Per slot: M-FFT, periodic replication to M' bins, roll-off weighting,
    // M'-IFFT.
    fn cps_blocks(&self, ext: &DelayDopplerGrid, cm: &mut CmCounter) -> DelayTimeGrid {
        let mut x = ext.symbols.clone();
        dft_rows(&mut x, true, cm);
        let (md, n) = x.shape();
        let mp = self.fft_mp.len();
        let scale = 1.0 / libm::sqrt((md * mp) as f64);
        let charge = self.rolloff_half(1.0);
        let mut out = CMatrix::zeros(mp, n);
        let mut spec = vec![ZERO; md];
        let mut buf = vec![ZERO; mp];
        for b in 0..n {
            spec.copy_from_slice(x.column(b).as_slice());
            self.fft_m.forward(&mut spec, cm);
            for (i, v) in buf.iter_mut().enumerate() {
                *v = match self.cps_gain[i] {
                    None => spec[i % md],
                    Some(g) if g == 0.0 => ZERO,
                    Some(g) => {
                        cm.shaping_executed += CmCount::from_half_cms(1);
                        spec[i % md] * g
                    }
                };
            }
            self.charge_rolloff(cm, charge);
            self.fft_mp.inverse(&mut buf, cm);
            for (o, v) in out.column_mut(b).iter_mut().zip(&buf) {
                *o = v * scale;
            }
        }
        DelayTimeGrid { values: out, delay_origin: 0 }
    }

    // Per slot: M'-FFT, roll-off weighting, folding of the L_us replicas
    // (decimation), M-IFFT; then the N-DFT across time.
    fn cps_demod(&self, y: &DelayTimeGrid, cm: &mut CmCounter) -> DelayDopplerGrid {
        let md = self.fft_m.len();
        let mp = self.fft_mp.len();
        let n = y.n();
        let scale = 1.0 / libm::sqrt((md * mp) as f64);
        let charge = self.rolloff_half(1.0);
        let mut z = CMatrix::zeros(md, n);
        let mut buf = vec![ZERO; mp];
        let mut fold = vec![ZERO; md];
        for b in 0..n {
            buf.copy_from_slice(y.values.column(b).as_slice());
            self.fft_mp.forward(&mut buf, cm);
            fold.fill(ZERO);
            for (i, v) in buf.iter().enumerate() {
                match self.cps_gain[i] {
                    None => fold[i % md] += v,
                    Some(g) if g == 0.0 => {}
                    Some(g) => {
                        cm.shaping_executed += CmCount::from_half_cms(1);
                        fold[i % md] += v * g;
                    }
                }
            }
            self.charge_rolloff(cm, charge);
            self.fft_m.inverse(&mut fold, cm);
            for (o, v) in z.column_mut(b).iter_mut().zip(&fold) {
                *o = v * scale;
            }
        }
        dft_rows(&mut z, false, cm);
        DelayDopplerGrid::new(z)
    }

    /// `2M`-FFT of the zero-padded column, replicated to `2M'` bins.
    fn padded_spectrum(&self, col: &[C64], spec: &mut [C64], wide: &mut [C64], cm: &mut CmCounter) {
        spec.fill(ZERO);
        spec[..col.len()].copy_from_slice(col);
        self.fft_2m.forward(spec, cm);
        let m2 = spec.len();
        for (i, v) in wide.iter_mut().enumerate() {
            *v = spec[i % m2];
        }
    }

    /// Multiplies by a stored response; returns the executed half-CMs.
    fn weight(wide: &mut [C64], resp: &[C64], conj: bool) -> u64 {
        let mut executed = 0;
        for (v, r) in wide.iter_mut().zip(resp) {
            let r = if conj { r.conj() } else { *r };
            *v *= r;
            executed += if r.im == 0.0 { 1 } else { 2 };
        }
        executed
    }

    /// Copies the `γ'` samples starting at delay `origin` out of a
    /// `2M'`-sample circular buffer.
    fn extract(&self, wide: &[C64], dst: &mut [C64], scale: f64) {
        let origin = self.base.pulse().origin;
        let len = wide.len() as isize;
        for (i, d) in dst.iter_mut().enumerate() {
            *d = wide[(origin + i as isize).rem_euclid(len) as usize] * scale;
        }
    }

    fn place(&self, src: &[C64], wide: &mut [C64]) {
        let origin = self.base.pulse().origin;
        let len = wide.len() as isize;
        wide.fill(ZERO);
        for (i, s) in src.iter().enumerate() {
            wide[(origin + i as isize).rem_euclid(len) as usize] += s;
        }
    }

    fn lps_blocks(&self, ext: &DelayDopplerGrid, cm: &mut CmCounter) -> DelayTimeGrid {
        let mut x = ext.symbols.clone();
        dft_rows(&mut x, true, cm);
        let n = x.ncols();
        let m2p = self.fft_2mp.len();
        let gamma = self.base.geometry().gamma_tx;
        let charge = self.rolloff_half(2.0);
        let mut out = CMatrix::zeros(gamma, n);
        let mut spec = vec![ZERO; self.fft_2m.len()];
        let mut wide = vec![ZERO; m2p];
        for b in 0..n {
            self.padded_spectrum(x.column(b).as_slice(), &mut spec, &mut wide, cm);
            cm.shaping_executed += CmCount::from_half_cms(Self::weight(&mut wide, &self.responses[0], false));
            self.charge_rolloff(cm, charge);
            self.fft_2mp.inverse(&mut wide, cm);
            self.extract(&wide, out.column_mut(b).as_mut_slice(), 1.0 / m2p as f64);
        }
        DelayTimeGrid { values: out, delay_origin: self.base.pulse().origin }
    }

    /// `2M'`-FFT of a placed window, matched weighting, folding to `2M`
    /// bins, `2M`-IFFT; the first `M_d` samples are the decimated output.
    fn matched_column(&self, wide: &mut [C64], resp: &[C64], dst: &mut [C64], cm: &mut CmCounter) -> u64 {
        self.fft_2mp.forward(wide, cm);
        let executed = Self::weight(wide, resp, true);
        let m2 = self.fft_2m.len();
        let mut fold = vec![ZERO; m2];
        for (i, v) in wide.iter().enumerate() {
            fold[i % m2] += v;
        }
        self.fft_2m.inverse(&mut fold, cm);
        let scale = 1.0 / wide.len() as f64;
        for (d, v) in dst.iter_mut().zip(&fold) {
            *d = v * scale;
        }
        executed
    }

    fn lps_demod(&self, y: &DelayTimeGrid, cm: &mut CmCounter) -> DelayDopplerGrid {
        let md = self.fft_m.len();
        let n = y.n();
        let charge = self.rolloff_half(2.0);
        let mut z = CMatrix::zeros(md, n);
        let mut wide = vec![ZERO; self.fft_2mp.len()];
        for b in 0..n {
            self.place(y.values.column(b).as_slice(), &mut wide);
            let ex = self.matched_column(&mut wide, &self.responses[0], z.column_mut(b).as_mut_slice(), cm);
            cm.shaping_executed += CmCount::from_half_cms(ex);
            self.charge_rolloff(cm, charge);
        }
        dft_rows(&mut z, false, cm);
        DelayDopplerGrid::new(z)
    }

    // Per Doppler bin: fast convolution with p_k over 2M' samples; then the
    // N-IDFT across Doppler of all 2M' rows.
    fn oddm_blocks(&self, ext: &DelayDopplerGrid, cm: &mut CmCounter) -> DelayTimeGrid {
        let n = ext.n();
        let m2p = self.fft_2mp.len();
        let gamma = self.base.geometry().gamma_tx;
        let charge = 2 * self.rolloff_half(2.0);
        let mut s = CMatrix::zeros(m2p, n);
        let mut spec = vec![ZERO; self.fft_2m.len()];
        let mut wide = vec![ZERO; m2p];
        for k in 0..n {
            self.padded_spectrum(ext.symbols.column(k).as_slice(), &mut spec, &mut wide, cm);
            cm.shaping_executed += CmCount::from_half_cms(Self::weight(&mut wide, &self.responses[k], false));
            self.charge_rolloff(cm, charge);
            self.fft_2mp.inverse(&mut wide, cm);
            s.column_mut(k).copy_from_slice(&wide);
        }
        dft_rows(&mut s, true, cm);
        let mut out = CMatrix::zeros(gamma, n);
        for b in 0..n {
            self.extract(s.column(b).as_slice(), out.column_mut(b).as_mut_slice(), 1.0 / m2p as f64);
        }
        DelayTimeGrid { values: out, delay_origin: self.base.pulse().origin }
    }

    // N-DFT across time of all 2M' placed rows, then per Doppler bin the
    // matched filter p*_k[−l'] and decimation.
    fn oddm_demod(&self, y: &DelayTimeGrid, cm: &mut CmCounter) -> DelayDopplerGrid {
        let md = self.fft_m.len();
        let n = y.n();
        let m2p = self.fft_2mp.len();
        let charge = 2 * self.rolloff_half(2.0);
        let mut t = CMatrix::zeros(m2p, n);
        let mut wide = vec![ZERO; m2p];
        for b in 0..n {
            self.place(y.values.column(b).as_slice(), &mut wide);
            t.column_mut(b).copy_from_slice(&wide);
        }
        dft_rows(&mut t, false, cm);
        let mut d = CMatrix::zeros(md, n);
        for k in 0..n {
            wide.copy_from_slice(t.column(k).as_slice());
            let ex = self.matched_column(&mut wide, &self.responses[k], d.column_mut(k).as_mut_slice(), cm);
            cm.shaping_executed += CmCount::from_half_cms(ex);
            self.charge_rolloff(cm, charge);
        }
        DelayDopplerGrid::new(d)
    }
}

fn fast_for(grid: &DelayDopplerGrid, cfg: &ModemConfig, t: Technique) -> Result<(ModemOutput, CmCounter)> {
    if cfg.technique != t {
        bail!(Config, "configuration selects {}, operation requires {}", cfg.technique.name(), t.name());
    }
    let mut cm = CmCounter::new();
    let out = FastModem::new(cfg)?.modulate(grid, &mut cm)?;
    Ok((out, cm))
}

pub fn modulate_cps_fast(grid: &DelayDopplerGrid, cfg: &ModemConfig) -> Result<(ModemOutput, CmCounter)> {
    fast_for(grid, cfg, Technique::Cps)
}

pub fn modulate_lps_fast(grid: &DelayDopplerGrid, cfg: &ModemConfig) -> Result<(ModemOutput, CmCounter)> {
    fast_for(grid, cfg, Technique::Lps)
}

pub fn modulate_oddm_fast(grid: &DelayDopplerGrid, cfg: &ModemConfig) -> Result<(ModemOutput, CmCounter)> {
    fast_for(grid, cfg, Technique::Oddm)
}

fn fast_demod_for(stream: &SampleStream, cfg: &ModemConfig, t: Technique) -> Result<(DelayDopplerGrid, CmCounter)> {
    if cfg.technique != t {
        bail!(Config, "configuration selects {}, operation requires {}", cfg.technique.name(), t.name());
    }
    let mut cm = CmCounter::new();
    let out = FastModem::new(cfg)?.demodulate(stream, &mut cm)?;
    Ok((out, cm))
}

pub fn demodulate_cps_fast(stream: &SampleStream, cfg: &ModemConfig) -> Result<(DelayDopplerGrid, CmCounter)> {
    fast_demod_for(stream, cfg, Technique::Cps)
}

pub fn demodulate_lps_fast(stream: &SampleStream, cfg: &ModemConfig) -> Result<(DelayDopplerGrid, CmCounter)> {
    fast_demod_for(stream, cfg, Technique::Lps)
}

pub fn demodulate_oddm_fast(stream: &SampleStream, cfg: &ModemConfig) -> Result<(DelayDopplerGrid, CmCounter)> {
    fast_demod_for(stream, cfg, Technique::Oddm)
}

fn truncated_taps(cfg: &ModemConfig) -> Result<(Vec<f64>, usize)> {
    let q = match cfg.q {
        Some(q) => q,
        None => bail!(Config, "the counted reference structures need a truncation Q"),
    };
    let p = crate::pulse::srrc_time(cfg.alpha, cfg.m_d(), cfg.l_us, Some(q))?;
    let qp = q * cfg.l_us;
    // Non-negative half of the even pulse: half[τ] = p[τ], τ ∈ 0..=Q'.
    Ok((p.taps[qp..].to_vec(), qp))
}

/// Polyphase direct shaper of the cost table, on the extended grid.
///
/// Each Doppler-IDFT'd symbol is multiplied once by every distinct
/// off-grid tap `p[τ]`, `0 < τ ≤ Q'`, `τ ≢ 0 (mod L_us)`, and the product
/// feeds both `±τ` outputs (the pulse is even). Those `Q'−Q` products are
/// charged; the `Q+1` symbol-spaced taps `p[jL_us]` are executed too but, as
/// in the cost model, not charged (they vanish exactly only at `α = 0`).
///
/// L-PS returns `γ' = M'+2Q'` rows at origin `−Q'`; C-PS wraps the
/// truncated pulse circularly into `M'` rows.
pub fn direct_shape_counted(ext: &DelayDopplerGrid, cfg: &ModemConfig, cm: &mut CmCounter) -> Result<DelayTimeGrid> {
    if cfg.technique == Technique::Oddm {
        bail!(Unsupported, "the polyphase direct structure covers C-PS and L-PS only");
    }
    let (half, qp) = truncated_taps(cfg)?;
    let l_us = cfg.l_us;
    let mut x = ext.symbols.clone();
    dft_rows(&mut x, true, cm);
    let (md, n) = x.shape();
    let mp = md * l_us;
    let circular = cfg.technique == Technique::Cps;
    let (rows, origin) = if circular { (mp, 0) } else { (mp + 2 * qp, -(qp as isize)) };
    let mut out = CMatrix::zeros(rows, n);
    let idx = |t: isize| -> usize {
        if circular {
            t.rem_euclid(mp as isize) as usize
        } else {
            (t - origin) as usize
        }
    };
    for b in 0..n {
        for l in 0..md {
            let v = x[(l, b)];
            let c = (l * l_us) as isize;
            for (tau, &p) in half.iter().enumerate() {
                let prod = v * p;
                if tau % l_us == 0 {
                    cm.shaping_executed += CmCount::from_half_cms(1);
                } else {
                    cm.shaping += CmCount::from_half_cms(1);
                    cm.shaping_executed += CmCount::from_half_cms(1);
                }
                out[(idx(c + tau as isize), b)] += prod;
                if tau > 0 {
                    out[(idx(c - tau as isize), b)] += prod;
                }
            }
        }
    }
    Ok(DelayTimeGrid { values: out, delay_origin: origin })
}

/// Per-symbol ODDM reference shaper: every symbol `(l,k)` is spread over all
/// `N` blocks with its own complex coefficients
/// `p[τ]·e^{j2πk(nM'+τ)/(M'N)}/√N` (stored), one CM each. Taps at multiples
/// of `L_us` are executed but not charged, as in the cost model. Returns the
/// serialized core (no CP), starting at delay `−Q'`.
pub fn reference_oddm_counted(ext: &DelayDopplerGrid, cfg: &ModemConfig, cm: &mut CmCounter) -> Result<SampleStream> {
    if cfg.technique != Technique::Oddm {
        bail!(Config, "the reference ODDM structure needs an ODDM configuration");
    }
    let (half, qp) = truncated_taps(cfg)?;
    let (md, n) = ext.symbols.shape();
    let l_us = cfg.l_us;
    let mp = md * l_us;
    let tap = |tau: isize| half[tau.unsigned_abs()];
    let span = 2 * qp + 1;
    // coeff[(k·N + b)·span + (τ+Q')]
    let inv = 1.0 / libm::sqrt(n as f64);
    let mut coeff = Vec::with_capacity(n * n * span);
    for k in 0..n {
        for b in 0..n {
            for i in 0..span {
                let tau = i as isize - qp as isize;
                let ph = 2.0 * PI * (k as isize * (b * mp) as isize + k as isize * tau) as f64 / (mp * n) as f64;
                coeff.push(cis(ph) * (tap(tau) * inv));
            }
        }
    }
    let len = (n - 1) * mp + mp + 2 * qp;
    let mut samples = vec![ZERO; len];
    for k in 0..n {
        for l in 0..md {
            let v = ext.symbols[(l, k)];
            for b in 0..n {
                let c = &coeff[(k * n + b) * span..(k * n + b + 1) * span];
                let start = b * mp + l * l_us;
                for (i, &w) in c.iter().enumerate() {
                    samples[start + i] += v * w;
                    if (i as isize - qp as isize) % l_us as isize == 0 {
                        cm.shaping_executed += CmCount::from_cms(1);
                    } else {
                        cm.shaping += CmCount::from_cms(1);
                        cm.shaping_executed += CmCount::from_cms(1);
                    }
                }
            }
        }
    }
    Ok(SampleStream { samples, start_index: -(qp as isize), rate_factor: l_us })
}

/// Serializes counted direct-structure blocks at the configuration's stride.
pub fn serialize_counted(blocks: &DelayTimeGrid, cfg: &ModemConfig) -> SampleStream {
    serialize(blocks, cfg.stride(), cfg.l_us)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(q: usize) -> CmParams {
        CmParams { m: 128, n: 32, l_us: 4, q, alpha: 0.1 }
    }

    #[test]
    fn table_values_at_reference_parameters() {
        let p = params(22);
        let v = |t, i| predict_cm(t, i, &p).unwrap();
        assert_eq!(v(Technique::Cps, Implementation::Fast), CmCount::from_cms(98_512));
        assert_eq!(v(Technique::Lps, Implementation::Direct), CmCount::from_cms(145_408));
        assert_eq!(v(Technique::Oddm, Implementation::ReferenceOddm), CmCount::from_cms(17_301_504));
        assert_eq!(v(Technique::Lps, Implementation::Fast), CmCount::from_cms(207_264));
        assert_eq!(v(Technique::Oddm, Implementation::Fast), CmCount::from_cms(279_360));
        assert!(predict_cm(Technique::Oddm, Implementation::Direct, &p).is_err());
    }

    #[test]
    fn direct_term_vanishes_without_oversampling() {
        let p = CmParams { m: 64, n: 16, l_us: 1, q: 8, alpha: 0.0 };
        let got = predict_cm(Technique::Lps, Implementation::Direct, &p).unwrap();
        assert_eq!(got, CmCount::from_cms(64 * 16 * 2));
    }
}
