//! Monte-Carlo drivers shared by the CLI runs and the acceptance suite.
//!
//! Every random draw comes from `ChaCha8(seed)` on a stream chosen by the
//! frame (or trial) index, so results do not depend on thread count or
//! scheduling; parallel loops collect in index order.

use anyhow::Result;
use ddpulse::channel::ChannelSpec;
use ddpulse::dft::{cis, CmCounter};
use ddpulse::effective::NoiseCovariance;
use ddpulse::fast::{predict_cm, CmParams, FastModem, Implementation};
use ddpulse::metrics::{oob_power, papr_db, psd_shift, BerContext, BerRecord, PsdEstimate, StopRule, Welch};
use ddpulse::modem::{DirectModem, ModemOutput};
use ddpulse::qam::{qam_map, QamOrder};
use ddpulse::{DelayDopplerGrid, GuardConfig, GuardMode, ModemConfig, Technique, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub fn frame_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn random_grid<R: Rng + ?Sized>(rng: &mut R, order: QamOrder, rows: usize, cols: usize) -> DelayDopplerGrid {
    let bits: Vec<u8> = (0..rows * cols * order.bits_per_symbol()).map(|_| rng.random_range(0..2u8)).collect();
    qam_map(&bits, order, rows, cols).expect("bit count matches the grid")
}

/// Direct modem, or the fast structure where it exists and is cheaper.
pub enum AnyModem {
    Direct(DirectModem),
    Fast(FastModem),
}

impl AnyModem {
    /// Fast C-PS when the block is a power of two (its cost is `O(log M)`
    /// against the full-length circular pulse); direct otherwise. Truncated
    /// linear pulses are cheaper to apply directly at `2Q/M` below ~50%.
    pub fn cheapest(cfg: &ModemConfig) -> Result<Self> {
        if cfg.technique == Technique::Cps && cfg.m_d().is_power_of_two() {
            if let Ok(f) = FastModem::new(cfg) {
                return Ok(AnyModem::Fast(f));
            }
        }
        Ok(AnyModem::Direct(DirectModem::new(cfg)?))
    }

    pub fn direct(&self) -> &DirectModem {
        match self {
            AnyModem::Direct(d) => d,
            AnyModem::Fast(f) => f.direct(),
        }
    }

    pub fn modulate(&self, data: &DelayDopplerGrid) -> Result<ModemOutput> {
        Ok(match self {
            AnyModem::Direct(d) => d.modulate(data)?,
            AnyModem::Fast(f) => f.modulate(data, &mut CmCounter::new())?,
        })
    }

    /// Transmitted frame without its cyclic prefix.
    pub fn core(&self, data: &DelayDopplerGrid) -> Result<Vec<C64>> {
        let mut s = self.modulate(data)?.stream.samples;
        s.drain(..self.direct().geometry().cp);
        Ok(s)
    }
}

/// OOB measurement band: the edge of the occupied band (`1/(2L_us)` of the
/// oversampled rate) and an offset of a quarter of the occupied bandwidth.
pub fn oob_band(cfg: &ModemConfig) -> (f64, f64) {
    let occupied = 1.0 / cfg.l_us as f64;
    (occupied / 2.0, occupied / 4.0)
}

#[derive(Clone, Debug)]
pub struct PsdSeries {
    pub name: &'static str,
    pub cfg: ModemConfig,
    pub psd: PsdEstimate,
    pub oob_db: f64,
}

/// Welch PSD settings shared by all series.
#[derive(Clone, Copy, Debug)]
pub struct PsdParams {
    pub frames: usize,
    pub seg_len: usize,
    pub overlap: usize,
    pub order: QamOrder,
    pub seed: u64,
}

/// Plain C-PS, C-PS with CE-before-PS windowing, C-PS with zero guards,
/// L-PS and ODDM, all on the same data frames.
pub fn psd_configs(base: &ModemConfig, guard_len: usize) -> Vec<(&'static str, ModemConfig)> {
    let cps = base.clone().with_technique(Technique::Cps).with_guard(GuardConfig::none());
    vec![
        ("cps", cps.clone()),
        ("cps_window", cps.clone().with_guard(GuardConfig::cyclic_extension(GuardMode::CeBeforePs, guard_len, base.m))),
        ("cps_zg", cps.clone().with_guard(GuardConfig::zero_guard(guard_len))),
        ("lps", cps.clone().with_technique(Technique::Lps)),
        ("oddm", cps.with_technique(Technique::Oddm)),
    ]
}

pub fn psd_of(cfg: &ModemConfig, p: PsdParams) -> Result<PsdEstimate> {
    let modem = AnyModem::cheapest(cfg)?;
    let frames: Vec<Vec<C64>> = (0..p.frames)
        .into_par_iter()
        .map(|f| modem.core(&random_grid(&mut frame_rng(p.seed, f as u64), p.order, cfg.m, cfg.n)))
        .collect::<Result<_>>()?;
    let mut w = Welch::new(p.seg_len, p.overlap)?;
    for s in &frames {
        w.add(s)?;
    }
    Ok(w.finish()?)
}

pub fn psd_series(base: &ModemConfig, guard_len: usize, p: PsdParams) -> Result<Vec<PsdSeries>> {
    psd_configs(base, guard_len)
        .into_iter()
        .map(|(name, cfg)| {
            let psd = psd_of(&cfg, p)?;
            let (edge, offset) = oob_band(&cfg);
            let oob_db = oob_power(&psd, edge, offset);
            Ok(PsdSeries { name, cfg, psd, oob_db })
        })
        .collect()
}

/// Result of the single-Doppler-bin spectrum comparison.
#[derive(Clone, Debug)]
pub struct StaircaseRow {
    pub k: usize,
    /// Cross-correlation peak of the bin-`k` PSD against the reference, in
    /// periodogram bins of width `1/(M'N)`.
    pub shift: isize,
    /// Largest dB deviation between the bin-`k` PSD and the reference
    /// shifted by `k` bins, over bins within 60 dB of the peak.
    pub max_dev_db: f64,
}

/// ODDM with data in Doppler bin `k` only is, sample for sample, the
/// bin-0 signal of phase-ramped data `D[l]·e^{−j2πkl/(MN)}` modulated by
/// `e^{j2πkκ/(M'N)}`. The two frames therefore carry the same data power
/// pattern and their periodograms over `M'N` samples differ by a shift of
/// exactly `k` bins.
pub fn staircase(cfg: &ModemConfig, ks: &[usize], frames: usize, seed: u64) -> Result<Vec<StaircaseRow>> {
    let cfg = cfg.clone().with_technique(Technique::Oddm);
    let modem = DirectModem::new(&cfg)?;
    let (m, n) = (cfg.m, cfg.n);
    let nfft = cfg.m_prime() * n;
    let order = QamOrder::new(4)?;
    let mut rows = Vec::new();
    for &k in ks {
        let mut w_ref = Welch::new(nfft, 0)?;
        let mut w_k = Welch::new(nfft, 0)?;
        for f in 0..frames {
            let d = random_grid(&mut frame_rng(seed, f as u64), order, m, 1);
            let mut gk = DelayDopplerGrid::zeros(m, n);
            let mut g0 = DelayDopplerGrid::zeros(m, n);
            for l in 0..m {
                gk.symbols[(l, k)] = d.symbols[(l, 0)];
                let ramp = -2.0 * core::f64::consts::PI * (k * l) as f64 / (m * n) as f64;
                g0.symbols[(l, 0)] = d.symbols[(l, 0)] * cis(ramp);
            }
            let cp = modem.geometry().cp;
            w_k.add(&modem.modulate(&gk)?.stream.samples[cp..cp + nfft])?;
            w_ref.add(&modem.modulate(&g0)?.stream.samples[cp..cp + nfft])?;
        }
        let (r, s) = (w_ref.finish()?, w_k.finish()?);
        let shift = psd_shift(&r, &s, n);
        let peak = r.power_db.iter().cloned().fold(f64::MIN, f64::max);
        let max_dev_db = (0..nfft)
            .filter(|&i| r.power_db[i] > peak - 60.0)
            .map(|i| (s.power_db[(i + k) % nfft] - r.power_db[i]).abs())
            .fold(0.0, f64::max);
        rows.push(StaircaseRow { k, shift, max_dev_db });
    }
    Ok(rows)
}

/// Per-frame PAPR (dB) of CP-stripped frames with random data.
pub fn papr_values(cfg: &ModemConfig, frames: usize, order: QamOrder, seed: u64) -> Result<Vec<f64>> {
    let modem = AnyModem::cheapest(cfg)?;
    (0..frames)
        .into_par_iter()
        .map(|f| {
            let g = random_grid(&mut frame_rng(seed, f as u64), order, cfg.m, cfg.n);
            Ok(papr_db(&modem.core(&g)?))
        })
        .collect()
}

/// Trials evaluated per parallel batch; fixed so the stopping point does
/// not depend on the thread count.
pub const BER_BATCH: usize = 32;

/// [`ddpulse::metrics::run_ber_point`] with trials fanned out over the
/// thread pool; stops at exactly the same trial as the sequential loop.
pub fn ber_point(ctx: &BerContext, ebn0_db: f64, stop: StopRule, seed: u64) -> Result<BerRecord> {
    anyhow::ensure!(stop.max_trials >= 1, "BER point needs at least one trial");
    let fixed = ctx.fixed_equalizer(ebn0_db)?;
    let mut rec = ctx.empty_record(ebn0_db);
    let mut next = 0;
    'outer: while next < stop.max_trials {
        let end = (next + BER_BATCH).min(stop.max_trials);
        let results: Vec<_> =
            (next..end).into_par_iter().map(|t| ctx.trial(ebn0_db, seed, t as u64, fixed.as_ref())).collect();
        for r in results {
            let (e, b) = r?;
            rec.absorb(e, b);
            if rec.bit_errors >= stop.min_errors {
                break 'outer;
            }
        }
        next = end;
    }
    Ok(rec)
}

/// One BER point for a modem/channel pair.
pub fn ber_for(
    cfg: &ModemConfig,
    channel: &ChannelSpec,
    order: QamOrder,
    ebn0_db: f64,
    stop: StopRule,
    seed: u64,
) -> Result<BerRecord> {
    let ctx = BerContext::new(cfg, channel, order, NoiseCovariance::Exact)?;
    ber_point(&ctx, ebn0_db, stop, seed)
}

/// Rows of the cost table, as `(technique, implementation)`.
pub const COST_ROWS: [(Technique, Implementation); 6] = [
    (Technique::Cps, Implementation::Direct),
    (Technique::Cps, Implementation::Fast),
    (Technique::Lps, Implementation::Direct),
    (Technique::Lps, Implementation::Fast),
    (Technique::Oddm, Implementation::ReferenceOddm),
    (Technique::Oddm, Implementation::Fast),
];

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexityRow {
    pub technique: Technique,
    pub implementation: Implementation,
    pub q: usize,
    /// Complex multiplications per frame.
    pub cm: f64,
}

pub fn complexity_sweep(cfg: &ModemConfig, qs: &[usize]) -> Result<Vec<ComplexityRow>> {
    let mut rows = Vec::new();
    for &q in qs {
        let p = CmParams { m: cfg.m, n: cfg.n, l_us: cfg.l_us, q, alpha: cfg.alpha };
        for (technique, implementation) in COST_ROWS {
            let cm = predict_cm(technique, implementation, &p)?.as_f64();
            rows.push(ComplexityRow { technique, implementation, q, cm });
        }
    }
    Ok(rows)
}

/// Smallest `Q` at which direct L-PS costs more than the fast structure.
pub fn lps_crossover(rows: &[ComplexityRow]) -> Option<usize> {
    let cost = |q: usize, imp: Implementation| {
        rows.iter().find(|r| r.q == q && r.technique == Technique::Lps && r.implementation == imp).map(|r| r.cm)
    };
    let mut qs: Vec<usize> = rows.iter().map(|r| r.q).collect();
    qs.sort_unstable();
    qs.dedup();
    qs.into_iter().find(|&q| matches!((cost(q, Implementation::Direct), cost(q, Implementation::Fast)), (Some(d), Some(f)) if d > f))
}
