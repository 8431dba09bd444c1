//! Reference modems, coded straight from the per-block convolution
//! definitions. These are the ground truth for the fast structures and the
//! matrix model.
//!
//! Frame layout: every technique transmits `N` delay blocks at a fixed
//! oversampled stride. Circular shaping keeps each block inside its stride;
//! linear shaping lets each block ramp up `left` samples early and ramp down
//! `right` samples late, and the overlapping tails are added. The serialized
//! core therefore spans `[origin, origin + ξ')` with `origin ≤ 0`, and the
//! cyclic prefix copies the last `L'_cp` samples of that whole core.

use alloc::vec;
use alloc::vec::Vec;

use crate::config::{GuardMode, ModemConfig, Technique};
use crate::dft::{CmCounter, Fft};
use crate::error::bail;
use crate::grid::{DelayDopplerGrid, DelayTimeGrid, SampleStream};
use crate::pulse::{modulated_pulse, rc_window, srrc_time, ModulatedPulse, PulsePrototype, WindowProfile};
use crate::transforms::{cp_add, cp_remove, deserialize, for_each_column, serialize};
use crate::{CMatrix, Result, C64};

/// Block geometry of a frame at the oversampled rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameGeometry {
    pub n: usize,
    /// Distance between consecutive block starts.
    pub stride: usize,
    /// Transmitted block length `γ'`.
    pub gamma_tx: usize,
    /// Delay index of the first transmitted sample of block 0.
    pub tx_origin: isize,
    /// Receive window length and its offset inside each block.
    pub gamma_rx: usize,
    pub rx_origin: isize,
    /// Serialized core length `ξ' = (N−1)·stride + γ'`.
    pub core_len: usize,
    /// `L'_cp`.
    pub cp: usize,
}

impl FrameGeometry {
    pub fn of(cfg: &ModemConfig, pulse: &PulsePrototype) -> Self {
        let stride = cfg.stride();
        let md_p = cfg.m_d() * cfg.l_us;
        let (gamma_tx, tx_origin, gamma_rx, rx_origin) = match cfg.technique {
            Technique::Cps => match cfg.guard.mode {
                GuardMode::CeAfterPs => {
                    (stride, 0, cfg.m_prime(), (cfg.guard.head() * cfg.l_us) as isize)
                }
                _ => (md_p, 0, md_p, 0),
            },
            Technique::Lps | Technique::Oddm => {
                let g = pulse.linear_block_len();
                (g, pulse.origin, g, pulse.origin)
            }
        };
        FrameGeometry {
            n: cfg.n,
            stride,
            gamma_tx,
            tx_origin,
            gamma_rx,
            rx_origin,
            core_len: (cfg.n - 1) * stride + gamma_tx,
            cp: cfg.l_cp_prime(),
        }
    }

    /// Transmitted samples including the cyclic prefix.
    pub fn frame_len(&self) -> usize {
        self.core_len + self.cp
    }
}

/// Output of a modulator.
#[derive(Clone, Debug, PartialEq)]
pub struct ModemOutput {
    /// Transmitted samples, cyclic prefix included.
    pub stream: SampleStream,
    /// Shaped (and windowed) blocks before serialization.
    pub per_block: DelayTimeGrid,
    pub config: ModemConfig,
}

/// Reference transmitter/receiver for one configuration.
#[derive(Clone, Debug)]
pub struct DirectModem {
    cfg: ModemConfig,
    pulse: PulsePrototype,
    modulated: Vec<ModulatedPulse>,
    window: Option<WindowProfile>,
    geometry: FrameGeometry,
    fft_n: Fft,
}

/// Pulse used by a configuration: designed for the shaped grid's `M_d`,
/// truncated for the linear techniques when `Q` is set.
pub fn pulse_for(cfg: &ModemConfig) -> Result<PulsePrototype> {
    let q = if cfg.technique.is_linear() { cfg.q } else { None };
    srrc_time(cfg.alpha, cfg.m_d(), cfg.l_us, q)
}

impl DirectModem {
    pub fn new(cfg: &ModemConfig) -> Result<Self> {
        cfg.validate()?;
        let pulse = pulse_for(cfg)?;
        let modulated = if cfg.technique == Technique::Oddm {
            (0..cfg.n).map(|k| modulated_pulse(&pulse, k, cfg.n)).collect()
        } else {
            Vec::new()
        };
        let window = (cfg.guard.mode.is_ce() && cfg.guard.length > 0)
            .then(|| rc_window(cfg.guard.beta, cfg.m, cfg.l_us));
        let geometry = FrameGeometry::of(cfg, &pulse);
        Ok(DirectModem { cfg: cfg.clone(), pulse, modulated, window, geometry, fft_n: Fft::new(cfg.n) })
    }

    pub fn config(&self) -> &ModemConfig {
        &self.cfg
    }

    pub fn pulse(&self) -> &PulsePrototype {
        &self.pulse
    }

    pub fn window(&self) -> Option<&WindowProfile> {
        self.window.as_ref()
    }

    pub fn geometry(&self) -> FrameGeometry {
        self.geometry
    }

    pub(crate) fn modulated(&self) -> &[ModulatedPulse] {
        &self.modulated
    }

    /// Maps the `M×N` data grid onto the `M_d×N` grid that is shaped.
    pub fn extend(&self, data: &DelayDopplerGrid) -> Result<DelayDopplerGrid> {
        self.check_data(data)?;
        let g = &self.cfg.guard;
        Ok(match g.mode {
            GuardMode::ZeroGuard => insert_zero_guards(data, g.length),
            GuardMode::CeBeforePs => cyclic_extend(data, g.head(), g.tail()),
            GuardMode::None | GuardMode::CeAfterPs => data.clone(),
        })
    }

    /// Recovers the `M×N` data region from a receiver-side grid by dropping
    /// guard or extension rows.
    pub fn strip(&self, observed: &DelayDopplerGrid) -> DelayDopplerGrid {
        match self.cfg.guard.mode {
            GuardMode::ZeroGuard | GuardMode::CeBeforePs => {
                let h = self.cfg.guard.head();
                DelayDopplerGrid::new(observed.symbols.rows(h, self.cfg.m).into_owned())
            }
            GuardMode::None | GuardMode::CeAfterPs => observed.clone(),
        }
    }

    fn check_data(&self, data: &DelayDopplerGrid) -> Result<()> {
        if data.m_d() != self.cfg.m || data.n() != self.cfg.n {
            bail!(
                Dimension,
                "data grid is {}×{}, configuration expects {}×{}",
                data.m_d(),
                data.n(),
                self.cfg.m,
                self.cfg.n
            );
        }
        Ok(())
    }

    /// Full transmitter: guards, shaping, windowing, serialization, CP.
    pub fn modulate(&self, data: &DelayDopplerGrid) -> Result<ModemOutput> {
        let ext = self.extend(data)?;
        self.modulate_extended(&ext)
    }

    /// Transmitter starting from the already extended `M_d×N` grid.
    pub fn modulate_extended(&self, ext: &DelayDopplerGrid) -> Result<ModemOutput> {
        self.check_extended(ext)?;
        let blocks = match self.cfg.technique {
            Technique::Cps => self.cps_blocks(ext),
            Technique::Lps => self.lps_blocks(ext),
            Technique::Oddm => self.oddm_blocks(ext),
        };
        self.finish(blocks)
    }

    pub(crate) fn check_extended(&self, ext: &DelayDopplerGrid) -> Result<()> {
        if ext.m_d() != self.cfg.m_d() || ext.n() != self.cfg.n {
            bail!(Dimension, "extended grid is {}×{}, expected {}×{}", ext.m_d(), ext.n(), self.cfg.m_d(), self.cfg.n);
        }
        Ok(())
    }

    /// Post-shaping stages shared with the fast structures: CE-after-PS
    /// extension, windowing, serialization, CP.
    pub(crate) fn finish(&self, mut blocks: DelayTimeGrid) -> Result<ModemOutput> {
        if self.cfg.guard.mode == GuardMode::CeAfterPs {
            blocks = self.extend_blocks(&blocks);
        }
        if let Some(w) = &self.window {
            apply_window(&mut blocks.values, &w.taps);
        }
        let core = serialize(&blocks, self.geometry.stride, self.cfg.l_us);
        let stream = cp_add(&core, self.geometry.cp)?;
        Ok(ModemOutput { stream, per_block: blocks, config: self.cfg.clone() })
    }

    /// Full receiver up to the receiver-side delay-Doppler grid: `M_d×N` for
    /// zero guards and CE-before-PS, `M×N` otherwise. Matched filtering is
    /// applied per block before the DFT across time (C-PS, L-PS); ODDM
    /// always transforms first.
    pub fn demodulate(&self, stream: &SampleStream) -> Result<DelayDopplerGrid> {
        let y = self.receive_blocks(stream)?;
        Ok(match self.cfg.technique {
            Technique::Cps => self.cps_demod(&y, false),
            Technique::Lps => self.lps_demod(&y, false),
            Technique::Oddm => self.oddm_demod(&y),
        })
    }

    /// As [`demodulate`](Self::demodulate) but with the DFT across time
    /// applied before matched filtering.
    pub fn demodulate_transform_first(&self, stream: &SampleStream) -> Result<DelayDopplerGrid> {
        let y = self.receive_blocks(stream)?;
        Ok(match self.cfg.technique {
            Technique::Cps => self.cps_demod(&y, true),
            Technique::Lps => self.lps_demod(&y, true),
            Technique::Oddm => self.oddm_demod(&y),
        })
    }

    /// Strips the CP and slices the receive windows.
    pub fn receive_blocks(&self, stream: &SampleStream) -> Result<DelayTimeGrid> {
        let g = &self.geometry;
        if stream.len() != g.frame_len() {
            bail!(Dimension, "stream has {} samples, frame expects {}", stream.len(), g.frame_len());
        }
        let core = cp_remove(stream, g.cp)?;
        deserialize(&core, g.gamma_rx, g.stride, g.n, g.rx_origin)
    }

    /// Adjoint of the receiver from the CP-stripped core to the
    /// receiver-side grid. The matched filters are the transmit pulses, so
    /// this is the transmitter without window or CE-after extension, placed
    /// at the receive windows. Returns the core (no CP).
    pub(crate) fn receive_adjoint(&self, y: &DelayDopplerGrid) -> Result<SampleStream> {
        let g = &self.geometry;
        let rows = match self.cfg.guard.mode {
            GuardMode::CeAfterPs => self.cfg.m,
            _ => self.cfg.m_d(),
        };
        if y.m_d() != rows || y.n() != self.cfg.n {
            bail!(Dimension, "receiver grid is {}×{}, expected {}×{}", y.m_d(), y.n(), rows, self.cfg.n);
        }
        let blocks = match self.cfg.technique {
            Technique::Cps => self.cps_blocks(y),
            Technique::Lps => self.lps_blocks(y),
            Technique::Oddm => self.oddm_blocks(y),
        };
        let mut core = vec![C64::new(0.0, 0.0); g.core_len];
        for b in 0..g.n {
            for i in 0..g.gamma_rx {
                let at = (b * g.stride + i) as isize + g.rx_origin - g.tx_origin;
                if at >= 0 && (at as usize) < core.len() {
                    core[at as usize] += blocks.values[(i, b)];
                }
            }
        }
        Ok(SampleStream { samples: core, start_index: g.tx_origin, rate_factor: self.cfg.l_us })
    }

    // Circular shaping: IDFT across Doppler, then M'_d-point circular
    // convolution of the zero-stuffed block with p.
    fn cps_blocks(&self, ext: &DelayDopplerGrid) -> DelayTimeGrid {
        let x = self.idft_doppler(&ext.symbols);
        let (md, n) = x.shape();
        let l_us = self.cfg.l_us;
        let mp = md * l_us;
        let mut out = CMatrix::zeros(mp, n);
        for b in 0..n {
            for l in 0..md {
                let v = x[(l, b)];
                if v == C64::new(0.0, 0.0) {
                    continue;
                }
                circular_axpy(out.column_mut(b).as_mut_slice(), v, &self.pulse.periodic, l * l_us);
            }
        }
        DelayTimeGrid { values: out, delay_origin: 0 }
    }

    fn cps_demod(&self, y: &DelayTimeGrid, transform_first: bool) -> DelayDopplerGrid {
        let l_us = self.cfg.l_us;
        let mp = y.block_len();
        let m_rx = mp / l_us;
        let n = y.n();
        let src = if transform_first { self.dft_time(&y.values) } else { y.values.clone() };
        let mut z = CMatrix::zeros(m_rx, n);
        for b in 0..n {
            let col = src.column(b);
            for l in 0..m_rx {
                z[(l, b)] = circular_dot(col.as_slice(), &self.pulse.periodic, l * l_us);
            }
        }
        if !transform_first {
            z = self.dft_time(&z);
        }
        DelayDopplerGrid::new(z)
    }

    // Linear shaping: IDFT across Doppler, then linear convolution of the
    // zero-stuffed block with the (truncated) pulse.
    fn lps_blocks(&self, ext: &DelayDopplerGrid) -> DelayTimeGrid {
        let x = self.idft_doppler(&ext.symbols);
        let (md, n) = x.shape();
        let l_us = self.cfg.l_us;
        let gamma = self.geometry.gamma_tx;
        let taps = &self.pulse.taps;
        let mut out = CMatrix::zeros(gamma, n);
        for b in 0..n {
            let mut col = out.column_mut(b);
            let col = col.as_mut_slice();
            for l in 0..md {
                let v = x[(l, b)];
                for (o, &p) in col[l * l_us..l * l_us + taps.len()].iter_mut().zip(taps) {
                    *o += v * p;
                }
            }
        }
        DelayTimeGrid { values: out, delay_origin: self.pulse.origin }
    }

    fn lps_demod(&self, y: &DelayTimeGrid, transform_first: bool) -> DelayDopplerGrid {
        let l_us = self.cfg.l_us;
        let md = self.cfg.m_d();
        let n = y.n();
        let taps = &self.pulse.taps;
        let src = if transform_first { self.dft_time(&y.values) } else { y.values.clone() };
        let mut z = CMatrix::zeros(md, n);
        for b in 0..n {
            let col = src.column(b);
            let col = col.as_slice();
            for l in 0..md {
                z[(l, b)] = col[l * l_us..l * l_us + taps.len()].iter().zip(taps).map(|(y, &p)| y * p).sum();
            }
        }
        if !transform_first {
            z = self.dft_time(&z);
        }
        DelayDopplerGrid::new(z)
    }

    // ODDM: linear convolution with p_k per Doppler bin, then the IDFT across
    // Doppler of every delay row.
    fn oddm_blocks(&self, ext: &DelayDopplerGrid) -> DelayTimeGrid {
        let (md, n) = ext.symbols.shape();
        let l_us = self.cfg.l_us;
        let gamma = self.geometry.gamma_tx;
        let mut s = CMatrix::zeros(gamma, n);
        for k in 0..n {
            let pk = &self.modulated[k].taps;
            let mut col = s.column_mut(k);
            let col = col.as_mut_slice();
            for l in 0..md {
                let v = ext.symbols[(l, k)];
                if v == C64::new(0.0, 0.0) {
                    continue;
                }
                for (o, p) in col[l * l_us..l * l_us + pk.len()].iter_mut().zip(pk) {
                    *o += v * p;
                }
            }
        }
        DelayTimeGrid { values: self.idft_doppler(&s), delay_origin: self.pulse.origin }
    }

    fn oddm_demod(&self, y: &DelayTimeGrid) -> DelayDopplerGrid {
        let l_us = self.cfg.l_us;
        let md = self.cfg.m_d();
        let n = y.n();
        let z = self.dft_time(&y.values);
        let mut d = CMatrix::zeros(md, n);
        for k in 0..n {
            let pk = &self.modulated[k].taps;
            let col = z.column(k);
            let col = col.as_slice();
            for l in 0..md {
                d[(l, k)] = col[l * l_us..l * l_us + pk.len()].iter().zip(pk).map(|(y, p)| y * p.conj()).sum();
            }
        }
        DelayDopplerGrid::new(d)
    }

    // Cyclic extension of each M'-sample block to M'_CE samples.
    fn extend_blocks(&self, blocks: &DelayTimeGrid) -> DelayTimeGrid {
        let mp = blocks.block_len();
        let head = self.cfg.guard.head() * self.cfg.l_us;
        let len = self.geometry.stride;
        let n = blocks.n();
        let values = CMatrix::from_fn(len, n, |i, b| {
            blocks.values[((i + mp - head % mp) % mp, b)]
        });
        DelayTimeGrid { values, delay_origin: 0 }
    }

    /// Unitary IDFT across the columns (Doppler → time) of every row.
    fn idft_doppler(&self, m: &CMatrix) -> CMatrix {
        self.row_transform(m, true)
    }

    /// Unitary DFT across the columns (time → Doppler) of every row.
    fn dft_time(&self, m: &CMatrix) -> CMatrix {
        self.row_transform(m, false)
    }

    fn row_transform(&self, m: &CMatrix, inverse: bool) -> CMatrix {
        let mut t = m.transpose();
        let mut cm = CmCounter::new();
        for_each_column(&mut t, |c| {
            if inverse {
                self.fft_n.unitary_inverse(c, &mut cm)
            } else {
                self.fft_n.unitary_forward(c, &mut cm)
            }
        });
        t.transpose()
    }
}

/// `out[i] += v·p[(i − shift) mod M']`.
fn circular_axpy(out: &mut [C64], v: C64, periodic: &[f64], shift: usize) {
    let mp = out.len();
    let (head, tail) = out.split_at_mut(shift);
    for (o, &p) in tail.iter_mut().zip(&periodic[..mp - shift]) {
        *o += v * p;
    }
    for (o, &p) in head.iter_mut().zip(&periodic[mp - shift..]) {
        *o += v * p;
    }
}

/// `Σ_i y[i]·p[(i − shift) mod M']`.
fn circular_dot(y: &[C64], periodic: &[f64], shift: usize) -> C64 {
    let mp = y.len();
    let (mut re, mut im) = (0.0, 0.0);
    for (v, &p) in y[shift..].iter().zip(&periodic[..mp - shift]).chain(y[..shift].iter().zip(&periodic[mp - shift..])) {
        re += v.re * p;
        im += v.im * p;
    }
    C64::new(re, im)
}

fn apply_window(blocks: &mut CMatrix, taps: &[f64]) {
    for_each_column(blocks, |c| {
        for (v, &w) in c.iter_mut().zip(taps) {
            *v *= w;
        }
    });
}

/// Adds `⌈L/2⌉` zero rows at the head and `⌊L/2⌋` at the tail.
pub fn insert_zero_guards(grid: &DelayDopplerGrid, l_zg: usize) -> DelayDopplerGrid {
    let (m, n) = grid.symbols.shape();
    let head = l_zg.div_ceil(2);
    let mut out = CMatrix::zeros(m + l_zg, n);
    out.rows_mut(head, m).copy_from(&grid.symbols);
    DelayDopplerGrid::new(out)
}

/// Inverse of [`insert_zero_guards`] on the data region.
pub fn strip_zero_guards(grid: &DelayDopplerGrid, l_zg: usize) -> DelayDopplerGrid {
    let m = grid.m_d() - l_zg;
    DelayDopplerGrid::new(grid.symbols.rows(l_zg.div_ceil(2), m).into_owned())
}

/// Cyclic extension along delay: row `i` of the output is row
/// `(i − head) mod M` of the input.
pub fn cyclic_extend(grid: &DelayDopplerGrid, head: usize, tail: usize) -> DelayDopplerGrid {
    let (m, n) = grid.symbols.shape();
    DelayDopplerGrid::new(CMatrix::from_fn(m + head + tail, n, |i, k| {
        grid.symbols[((i + m * head - head) % m, k)]
    }))
}

fn require(cfg: &ModemConfig, t: Technique) -> Result<()> {
    if cfg.technique != t {
        bail!(Config, "configuration selects {}, operation requires {}", cfg.technique.name(), t.name());
    }
    Ok(())
}

pub fn modulate_cps(grid: &DelayDopplerGrid, cfg: &ModemConfig) -> Result<ModemOutput> {
    require(cfg, Technique::Cps)?;
    DirectModem::new(cfg)?.modulate(grid)
}

pub fn demodulate_cps(stream: &SampleStream, cfg: &ModemConfig) -> Result<DelayDopplerGrid> {
    require(cfg, Technique::Cps)?;
    DirectModem::new(cfg)?.demodulate(stream)
}

pub fn modulate_lps(grid: &DelayDopplerGrid, cfg: &ModemConfig) -> Result<ModemOutput> {
    require(cfg, Technique::Lps)?;
    DirectModem::new(cfg)?.modulate(grid)
}

pub fn demodulate_lps(stream: &SampleStream, cfg: &ModemConfig) -> Result<DelayDopplerGrid> {
    require(cfg, Technique::Lps)?;
    DirectModem::new(cfg)?.demodulate(stream)
}

pub fn modulate_oddm(grid: &DelayDopplerGrid, cfg: &ModemConfig) -> Result<ModemOutput> {
    require(cfg, Technique::Oddm)?;
    DirectModem::new(cfg)?.modulate(grid)
}

pub fn demodulate_oddm(stream: &SampleStream, cfg: &ModemConfig) -> Result<DelayDopplerGrid> {
    require(cfg, Technique::Oddm)?;
    DirectModem::new(cfg)?.demodulate(stream)
}

/// Dispatches on `cfg.technique`.
pub fn modulate_unified(grid: &DelayDopplerGrid, cfg: &ModemConfig) -> Result<ModemOutput> {
    match cfg.technique {
        Technique::Cps => modulate_cps(grid, cfg),
        Technique::Lps => modulate_lps(grid, cfg),
        Technique::Oddm => modulate_oddm(grid, cfg),
    }
}

pub fn demodulate_unified(stream: &SampleStream, cfg: &ModemConfig) -> Result<DelayDopplerGrid> {
    match cfg.technique {
        Technique::Cps => demodulate_cps(stream, cfg),
        Technique::Lps => demodulate_lps(stream, cfg),
        Technique::Oddm => demodulate_oddm(stream, cfg),
    }
}

/// Windowed C-PS transmitter (either CE placement).
pub fn apply_window_ce(grid: &DelayDopplerGrid, cfg: &ModemConfig) -> Result<ModemOutput> {
    if !cfg.guard.mode.is_ce() {
        bail!(Config, "guard mode {} is not a cyclic-extension mode", cfg.guard.mode.name());
    }
    modulate_cps(grid, cfg)
}

/// C-PS shaping in the frequency domain: per slot, unitary `M_d`-point DFT,
/// periodic replication to `M'_d` bins, multiplication by `√M_d·ψ̄`, unitary
/// `M'_d`-point IDFT. Equivalent to the time-domain circular convolution.
pub fn cps_blocks_frequency_domain(ext: &DelayDopplerGrid, pulse: &PulsePrototype) -> DelayTimeGrid {
    let (md, n) = ext.symbols.shape();
    let mp = pulse.m_prime();
    let mut cm = CmCounter::new();
    let mut x = ext.symbols.transpose();
    let fft_n = Fft::new(n);
    for_each_column(&mut x, |c| fft_n.unitary_inverse(c, &mut cm));
    let x = x.transpose();
    let fft_m = Fft::new(md);
    let fft_mp = Fft::new(mp);
    let gain = libm::sqrt(md as f64);
    let mut out = CMatrix::zeros(mp, n);
    let mut spec = vec![C64::new(0.0, 0.0); md];
    let mut buf = vec![C64::new(0.0, 0.0); mp];
    for b in 0..n {
        spec.copy_from_slice(x.column(b).as_slice());
        fft_m.unitary_forward(&mut spec, &mut cm);
        for (i, v) in buf.iter_mut().enumerate() {
            *v = spec[i % md] * (gain * pulse.freq_taps[i]);
        }
        fft_mp.unitary_inverse(&mut buf, &mut cm);
        out.column_mut(b).copy_from_slice(&buf);
    }
    DelayTimeGrid { values: out, delay_origin: 0 }
}
