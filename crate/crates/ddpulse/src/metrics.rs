//! Measurements: Welch PSD and out-of-band power, PAPR and its CCDF, and
//! Monte-Carlo BER over the full chain with MMSE detection.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{add_awgn, apply_channel, generate_channel, ChannelRealization, ChannelSpec, NoiseModel};
use crate::config::{GuardMode, ModemConfig, Technique};
use crate::dft::{CmCounter, Fft};
use crate::effective::{equalize_grid, grid_equalizer, HeffBuilder, MmseEqualizer, NoiseCovariance};
use crate::error::bail;
use crate::grid::DelayDopplerGrid;
use crate::modem::DirectModem;
use crate::qam::{qam_demap, qam_map, QamOrder};
use crate::{Result, C64};

/// Power floor for dB conversions.
pub const FLOOR_DB: f64 = -200.0;

fn db(p: f64) -> f64 {
    if p > 0.0 {
        (10.0 * libm::log10(p)).max(FLOOR_DB)
    } else {
        FLOOR_DB
    }
}

/// Welch estimate on a centred frequency axis.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PsdEstimate {
    /// Normalized to the sample rate, ascending over `[−0.5, 0.5)`.
    pub freqs: Vec<f64>,
    /// Relative to the in-band level.
    pub power_db: Vec<f64>,
    pub seg_len: usize,
    pub overlap: usize,
    /// Periodograms averaged.
    pub segments: usize,
    pub taper: String,
    /// Linear power before normalization, same order as `freqs`.
    pub power: Vec<f64>,
}

/// Accumulates Hann-windowed periodograms over any number of streams.
pub struct Welch {
    seg_len: usize,
    overlap: usize,
    fft: Fft,
    taper: Vec<f64>,
    acc: Vec<f64>,
    segments: usize,
}

impl Welch {
    pub fn new(seg_len: usize, overlap: usize) -> Result<Self> {
        if seg_len < 2 || overlap >= seg_len {
            bail!(Config, "Welch needs seg_len ≥ 2 and overlap < seg_len (got {seg_len}, {overlap})");
        }
        // Periodic Hann.
        let taper = (0..seg_len).map(|i| 0.5 - 0.5 * libm::cos(2.0 * PI * i as f64 / seg_len as f64)).collect();
        Ok(Welch { seg_len, overlap, fft: Fft::new(seg_len), taper, acc: vec![0.0; seg_len], segments: 0 })
    }

    pub fn add(&mut self, samples: &[C64]) -> Result<()> {
        if samples.len() < self.seg_len {
            bail!(Config, "segment length {} exceeds stream length {}", self.seg_len, samples.len());
        }
        let hop = self.seg_len - self.overlap;
        let mut buf = vec![C64::new(0.0, 0.0); self.seg_len];
        let mut cm = CmCounter::new();
        let mut start = 0;
        while start + self.seg_len <= samples.len() {
            for ((b, s), w) in buf.iter_mut().zip(&samples[start..]).zip(&self.taper) {
                *b = s * w;
            }
            self.fft.forward(&mut buf, &mut cm);
            for (a, v) in self.acc.iter_mut().zip(&buf) {
                *a += v.norm_sqr();
            }
            self.segments += 1;
            start += hop;
        }
        Ok(())
    }

    /// Averages, centres the axis and normalizes to the in-band level: the
    /// mean of all bins within 3 dB of the strongest one.
    pub fn finish(&self) -> Result<PsdEstimate> {
        if self.segments == 0 {
            bail!(Config, "no segments accumulated");
        }
        let n = self.seg_len;
        let u: f64 = self.taper.iter().map(|w| w * w).sum();
        let scale = 1.0 / (self.segments as f64 * u);
        let half = n / 2;
        let mut freqs = Vec::with_capacity(n);
        let mut power = Vec::with_capacity(n);
        for i in 0..n {
            let bin = (i + n - half) % n;
            freqs.push((i as f64 - half as f64) / n as f64);
            power.push(self.acc[bin] * scale);
        }
        let peak = power.iter().cloned().fold(0.0, f64::max);
        let in_band: Vec<f64> = power.iter().cloned().filter(|&p| p >= peak * 0.5).collect();
        let level = in_band.iter().sum::<f64>() / in_band.len().max(1) as f64;
        let power_db = power.iter().map(|&p| if level > 0.0 { db(p / level) } else { FLOOR_DB }).collect();
        Ok(PsdEstimate {
            freqs,
            power_db,
            seg_len: n,
            overlap: self.overlap,
            segments: self.segments,
            taper: String::from("hann"),
            power,
        })
    }
}

/// One-shot Welch estimate of a single stream.
pub fn estimate_psd(samples: &[C64], seg_len: usize, overlap: usize) -> Result<PsdEstimate> {
    let mut w = Welch::new(seg_len, overlap)?;
    w.add(samples)?;
    w.finish()
}

/// Mean power over `|f| ≥ band_edge + offset` relative to the mean over
/// `|f| ≤ band_edge`, in dB (floored at [`FLOOR_DB`]).
pub fn oob_power(psd: &PsdEstimate, band_edge: f64, offset: f64) -> f64 {
    let mean = |sel: &dyn Fn(f64) -> bool| {
        let v: Vec<f64> = psd.freqs.iter().zip(&psd.power).filter(|(f, _)| sel(f.abs())).map(|(_, &p)| p).collect();
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let inband = mean(&|f| f <= band_edge);
    let out = mean(&|f| f >= band_edge + offset);
    if inband <= 0.0 {
        return FLOOR_DB;
    }
    db(out / inband)
}

/// Lag (in bins, positive towards higher frequency) maximizing the circular
/// cross-correlation of two linear PSDs, searched over `±max_lag`.
pub fn psd_shift(reference: &PsdEstimate, shifted: &PsdEstimate, max_lag: usize) -> isize {
    let n = reference.power.len() as isize;
    let mut best = (0isize, f64::NEG_INFINITY);
    for lag in -(max_lag as isize)..=max_lag as isize {
        let c: f64 = (0..n)
            .map(|i| reference.power[i as usize] * shifted.power[(i + lag).rem_euclid(n) as usize])
            .sum();
        if c > best.1 {
            best = (lag, c);
        }
    }
    best.0
}

/// `max|x|²/mean|x|²` in dB.
pub fn papr_db(samples: &[C64]) -> f64 {
    let (mut peak, mut sum) = (0.0f64, 0.0);
    for s in samples {
        let p = s.norm_sqr();
        peak = peak.max(p);
        sum += p;
    }
    if sum == 0.0 {
        return 0.0;
    }
    10.0 * libm::log10(peak * samples.len() as f64 / sum)
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PaprCcdf {
    pub thresholds_db: Vec<f64>,
    /// `P(PAPR > threshold)`.
    pub ccdf: Vec<f64>,
    pub frames: usize,
}

/// Fewest frames a CCDF is computed from.
pub const MIN_PAPR_FRAMES: usize = 100;

/// CCDF of per-frame PAPR values.
pub fn papr_ccdf_from_values(paprs: &[f64], thresholds_db: &[f64]) -> Result<PaprCcdf> {
    if paprs.len() < MIN_PAPR_FRAMES {
        bail!(Config, "PAPR CCDF needs at least {MIN_PAPR_FRAMES} frames, got {}", paprs.len());
    }
    let ccdf = thresholds_db
        .iter()
        .map(|&t| paprs.iter().filter(|&&p| p > t).count() as f64 / paprs.len() as f64)
        .collect();
    Ok(PaprCcdf { thresholds_db: thresholds_db.to_vec(), ccdf, frames: paprs.len() })
}

/// CCDF over CP-stripped frames.
pub fn papr_ccdf<'a>(frames: impl IntoIterator<Item = &'a [C64]>, thresholds_db: &[f64]) -> Result<PaprCcdf> {
    let v: Vec<f64> = frames.into_iter().map(papr_db).collect();
    papr_ccdf_from_values(&v, thresholds_db)
}

/// Gaussian tail `Q(x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / core::f64::consts::SQRT_2)
}

/// Exact bit error rate of Gray-mapped square QAM on AWGN.
///
/// Each `√M`-PAM rail carries `log2√M` bits; bit `k` errs with
/// `(2/√M)·Σ_i (−1)^⌊i2^{k−1}/√M⌋ (2^{k−1} − ⌊i2^{k−1}/√M + ½⌋) Q((2i+1)d)`,
/// `d = √(3·log2M·Eb/N0/(M−1))`.
pub fn qam_ber_awgn(order: QamOrder, ebn0_db: f64) -> f64 {
    let m = order.order() as f64;
    let sqrt_m = libm::sqrt(m) as usize;
    let bits = order.bits_per_symbol() as f64;
    let g = libm::pow(10.0, ebn0_db / 10.0);
    let d = libm::sqrt(3.0 * bits * g / (m - 1.0));
    let rail_bits = bits as usize / 2;
    let mut total = 0.0;
    for k in 1..=rail_bits {
        let pk = 1usize << (k - 1);
        let upper = (sqrt_m - sqrt_m / (1 << k)) as isize - 1;
        let mut s = 0.0;
        for i in 0..=upper.max(-1) {
            let i = i as usize;
            let sign = if (i * pk / sqrt_m) % 2 == 0 { 1.0 } else { -1.0 };
            let w = pk as f64 - libm::floor((i * pk) as f64 / sqrt_m as f64 + 0.5);
            s += sign * w * q_function((2 * i + 1) as f64 * d);
        }
        total += 2.0 * s / sqrt_m as f64;
    }
    total / rail_bits as f64
}

/// One BER point.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BerRecord {
    pub ebn0_db: f64,
    pub technique: Technique,
    pub guard: GuardMode,
    pub order: u32,
    pub trials: usize,
    pub bit_errors: u64,
    pub total_bits: u64,
    pub ber: f64,
}

impl BerRecord {
    /// Binomial standard deviation of the estimate at the true rate `p`.
    pub fn sigma_at(&self, p: f64) -> f64 {
        libm::sqrt(p * (1.0 - p) / self.total_bits as f64)
    }

    /// Wilson 95% interval.
    pub fn ci95(&self) -> (f64, f64) {
        let n = self.total_bits as f64;
        let z = 1.959964;
        let p = self.ber;
        let den = 1.0 + z * z / n;
        let c = (p + z * z / (2.0 * n)) / den;
        let h = z * libm::sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / den;
        ((c - h).max(0.0), (c + h).min(1.0))
    }

    /// Merges trials of the same point.
    pub fn absorb(&mut self, errors: u64, bits: u64) {
        self.trials += 1;
        self.bit_errors += errors;
        self.total_bits += bits;
        self.ber = if self.total_bits == 0 { 0.0 } else { self.bit_errors as f64 / self.total_bits as f64 };
    }
}

/// Run until `min_errors` bit errors or `max_trials` frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StopRule {
    pub min_errors: u64,
    pub max_trials: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule { min_errors: 200, max_trials: 1000 }
    }
}

/// Everything that is fixed across the trials of one configuration.
pub struct BerContext {
    pub cfg: ModemConfig,
    pub channel: ChannelSpec,
    pub order: QamOrder,
    pub covariance: NoiseCovariance,
    builder: HeffBuilder,
    mean_energy: f64,
    fixed_channel: Option<ChannelRealization>,
}

/// Expected transmitted core energy for i.i.d. unit-energy symbols:
/// `Σ_j ‖T·E_data·e_j‖²` over the data positions.
pub fn mean_core_energy(modem: &DirectModem) -> Result<f64> {
    let cfg = modem.config();
    let cp = modem.geometry().cp;
    let mut e = 0.0;
    for j in 0..cfg.m * cfg.n {
        let mut g = DelayDopplerGrid::zeros(cfg.m, cfg.n);
        g.symbols[(j % cfg.m, j / cfg.m)] = C64::new(1.0, 0.0);
        let s = modem.modulate(&g)?.stream;
        e += s.samples[cp..].iter().map(|v| v.norm_sqr()).sum::<f64>();
    }
    Ok(e)
}

impl BerContext {
    pub fn new(cfg: &ModemConfig, channel: &ChannelSpec, order: QamOrder, covariance: NoiseCovariance) -> Result<Self> {
        let modem = DirectModem::new(cfg)?;
        let mean_energy = mean_core_energy(&modem)?;
        let spec = ChannelSpec { bandwidth_hz: 1.0 / cfg.delta_tau, ..channel.clone() };
        let fixed_channel = if spec.is_random() { None } else { Some(generate_channel(&spec, cfg.l_us, 0)?) };
        Ok(BerContext {
            cfg: cfg.clone(),
            channel: spec,
            order,
            covariance,
            builder: HeffBuilder::new(modem)?,
            mean_energy,
            fixed_channel,
        })
    }

    pub fn modem(&self) -> &DirectModem {
        self.builder.modem()
    }

    /// `σ²_η` per oversampled sample at `ebn0_db`.
    pub fn noise(&self, ebn0_db: f64) -> NoiseModel {
        NoiseModel::from_ebn0(self.mean_energy, self.cfg.m * self.cfg.n, self.order.bits_per_symbol(), ebn0_db)
    }

    /// Detector for the fixed channel, when the channel is not random.
    pub fn fixed_equalizer(&self, ebn0_db: f64) -> Result<Option<MmseEqualizer>> {
        match &self.fixed_channel {
            Some(ch) => {
                let h = self.builder.build(ch)?;
                Ok(Some(grid_equalizer(&h, &self.cfg, self.noise(ebn0_db).sigma2, self.covariance)?))
            }
            None => Ok(None),
        }
    }

    /// One frame: returns `(bit errors, bits)`. The trial's randomness comes
    /// from `(seed, trial)` alone, so trials may run in any order.
    pub fn trial(&self, ebn0_db: f64, seed: u64, trial: u64, fixed: Option<&MmseEqualizer>) -> Result<(u64, u64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial);
        let cfg = &self.cfg;
        let nbits = cfg.m * cfg.n * self.order.bits_per_symbol();
        let bits: Vec<u8> = (0..nbits).map(|_| rng.random_range(0..2u8)).collect();
        let data = qam_map(&bits, self.order, cfg.m, cfg.n)?;
        let modem = self.modem();
        let tx = modem.modulate(&data)?;
        let drawn;
        let ch = match &self.fixed_channel {
            Some(c) => c,
            None => {
                drawn = generate_channel(&self.channel, cfg.l_us, rng.next_u64())?;
                &drawn
            }
        };
        let noise = self.noise(ebn0_db);
        let rx = add_awgn(&apply_channel(ch, &tx.stream, modem.geometry().cp)?, noise, &mut rng);
        let observed = modem.demodulate(&rx)?;
        let estimate = match fixed {
            Some(eq) => equalize_grid(eq, &observed, cfg)?,
            None => {
                let h = self.builder.build(ch)?;
                let eq = grid_equalizer(&h, cfg, noise.sigma2, self.covariance)?;
                equalize_grid(&eq, &observed, cfg)?
            }
        };
        let decided = qam_demap(&estimate, self.order);
        let errors = decided.iter().zip(&bits).filter(|(a, b)| a != b).count() as u64;
        Ok((errors, nbits as u64))
    }

    pub fn empty_record(&self, ebn0_db: f64) -> BerRecord {
        BerRecord {
            ebn0_db,
            technique: self.cfg.technique,
            guard: self.cfg.guard.mode,
            order: self.order.order(),
            trials: 0,
            bit_errors: 0,
            total_bits: 0,
            ber: 0.0,
        }
    }
}

/// Sequential BER point under `stop`.
pub fn run_ber_point(ctx: &BerContext, ebn0_db: f64, stop: StopRule, seed: u64) -> Result<BerRecord> {
    if stop.max_trials == 0 {
        bail!(Config, "BER point needs at least one trial");
    }
    let fixed = ctx.fixed_equalizer(ebn0_db)?;
    let mut rec = ctx.empty_record(ebn0_db);
    for t in 0..stop.max_trials {
        let (e, b) = ctx.trial(ebn0_db, seed, t as u64, fixed.as_ref())?;
        rec.absorb(e, b);
        if rec.bit_errors >= stop.min_errors {
            break;
        }
    }
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::GuardConfig;

    #[test]
    fn tone_lands_in_its_bin() {
        let n = 4096;
        let f0 = 0.125;
        let x: Vec<C64> = (0..n).map(|i| crate::dft::cis(2.0 * PI * f0 * i as f64)).collect();
        let psd = estimate_psd(&x, 256, 128).unwrap();
        let (i, _) = psd.power_db.iter().enumerate().fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        assert!((psd.freqs[i] - f0).abs() < 1e-12);
        assert!(estimate_psd(&x[..100], 256, 128).is_err());
    }

    #[test]
    fn oob_floor_for_brick_spectrum() {
        let psd = PsdEstimate {
            freqs: (0..8).map(|i| (i as f64 - 4.0) / 8.0).collect(),
            power_db: vec![0.0; 8],
            seg_len: 8,
            overlap: 0,
            segments: 1,
            taper: String::from("hann"),
            power: vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0],
        };
        assert_eq!(oob_power(&psd, 0.125, 0.1), FLOOR_DB);
    }

    #[test]
    fn papr_examples() {
        let mut x = vec![C64::new(1.0, 0.0); 100];
        assert!(papr_db(&x).abs() < 1e-12);
        x[3] = C64::new(2.0, 0.0);
        assert!((papr_db(&x) - 10.0 * libm::log10(4.0 / 1.03)).abs() < 1e-12);
        let frames = vec![vec![C64::new(0.0, 1.0); 10]; 100];
        let c = papr_ccdf(frames.iter().map(|f| f.as_slice()), &[-0.5, 0.0, 0.5]).unwrap();
        assert_eq!(c.ccdf, [1.0, 0.0, 0.0]);
        assert!(papr_ccdf(frames[..10].iter().map(|f| f.as_slice()), &[0.0]).is_err());
    }

    #[test]
    fn closed_form_ber() {
        let q4 = QamOrder::new(4).unwrap();
        let g = libm::pow(10.0, 0.6);
        assert!((qam_ber_awgn(q4, 6.0) - q_function(libm::sqrt(2.0 * g))).abs() < 1e-15);
        // 16-QAM: ¾Q(√(4γ/5)) + ½Q(3√(4γ/5)) − ¼Q(5√(4γ/5)).
        let q16 = QamOrder::new(16).unwrap();
        let a = libm::sqrt(0.8 * g);
        let want = 0.75 * q_function(a) + 0.5 * q_function(3.0 * a) - 0.25 * q_function(5.0 * a);
        assert!((qam_ber_awgn(q16, 6.0) - want).abs() < 1e-15);
    }

    #[test]
    fn ideal_noiseless_ber_is_zero() {
        for t in Technique::ALL {
            let cfg = ModemConfig { m: 8, n: 4, l_cp: 4, q: Some(2), ..ModemConfig::reference() }
                .with_technique(t)
                .with_guard(GuardConfig::zero_guard(2));
            let ctx = BerContext::new(&cfg, &ChannelSpec::ideal(), QamOrder::new(16).unwrap(), NoiseCovariance::Exact).unwrap();
            let r = run_ber_point(&ctx, f64::INFINITY, StopRule { min_errors: 1, max_trials: 3 }, 1).unwrap();
            assert_eq!((r.bit_errors, r.trials), (0, 3), "{t:?}");
        }
    }

    #[test]
    fn trials_are_reproducible() {
        let cfg = ModemConfig { m: 8, n: 4, l_cp: 8, q: Some(2), ..ModemConfig::reference() };
        let ch = ChannelSpec { velocity_kmh: 200.0, ..ChannelSpec::reference() };
        let ctx = BerContext::new(&cfg, &ch, QamOrder::new(4).unwrap(), NoiseCovariance::Exact).unwrap();
        let a = ctx.trial(4.0, 9, 3, None).unwrap();
        assert_eq!(a, ctx.trial(4.0, 9, 3, None).unwrap());
        assert!(a.0 > 0);
    }
}
