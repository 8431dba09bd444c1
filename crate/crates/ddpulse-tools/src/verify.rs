//! Oracle-equivalence suite behind `--run verify`: fast structures against
//! the direct modems, the effective-channel matrix against the sample-level
//! chain, and instrumented complexity counters against the cost formulas.

use anyhow::Result;
use ddpulse::channel::{apply_channel, generate_channel, ChannelSpec};
use ddpulse::dft::CmCounter;
use ddpulse::effective::{build_heff_dense, build_structured, data_channel, HeffBuilder};
use ddpulse::fast::{direct_shape_counted, predict_cm, reference_oddm_counted, CmParams, FastModem, Implementation};
use ddpulse::modem::DirectModem;
use ddpulse::qam::QamOrder;
use ddpulse::{CMatrix, GuardConfig, GuardMode, ModemConfig, Technique, C64};

use crate::experiments::{frame_rng, random_grid};

pub const MODEM_TOL: f64 = 1e-10;
pub const CHAIN_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Largest deviation seen (for exact-count checks, `|got − want|`).
    pub max_error: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    fn tolerance(name: String, max_error: f64, tolerance: f64, detail: String) -> Self {
        Check { passed: max_error <= tolerance, name, max_error, tolerance, detail }
    }
}

/// Suite parameters; `base` supplies `L_us`, `α`, `Q`, CP and `Δτ`.
#[derive(Clone, Debug)]
pub struct VerifyParams {
    pub base: ModemConfig,
    pub m: usize,
    pub n: usize,
    pub grids: usize,
    pub channels: usize,
    pub channel: ChannelSpec,
    pub guard_len: usize,
    pub seed: u64,
}

fn max_abs(a: &[C64], b: &[C64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn max_abs_m(a: &CMatrix, b: &CMatrix) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn matvec(a: &CMatrix, x: &[C64]) -> Vec<C64> {
    assert_eq!(a.ncols(), x.len());
    let mut y = vec![C64::new(0.0, 0.0); a.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        if xj == C64::new(0.0, 0.0) {
            continue;
        }
        for (yi, &aij) in y.iter_mut().zip(a.column(j).iter()) {
            *yi += aij * xj;
        }
    }
    y
}

impl VerifyParams {
    fn cfg(&self, t: Technique, g: GuardConfig) -> ModemConfig {
        let q = self.base.q.map(|q| q.min(self.m / 2));
        ModemConfig { m: self.m, n: self.n, q, ..self.base.clone() }.with_technique(t).with_guard(g)
    }

    /// Guard configurations exercised for technique `t`.
    fn guards(&self, t: Technique) -> Vec<GuardConfig> {
        let l = self.guard_len;
        let mut v = vec![GuardConfig::none(), GuardConfig::zero_guard(l)];
        if t == Technique::Cps {
            v.push(GuardConfig::cyclic_extension(GuardMode::CeBeforePs, l, self.m));
            v.push(GuardConfig::cyclic_extension(GuardMode::CeAfterPs, l, self.m));
        }
        v
    }
}

fn label(t: Technique, g: &GuardConfig) -> String {
    format!("{}/{}", t.name(), g.mode.name())
}

/// Fast modulator and demodulator against the direct ones.
pub fn check_fast_vs_direct(p: &VerifyParams) -> Result<Vec<Check>> {
    let order = QamOrder::new(4)?;
    let mut out = Vec::new();
    for t in Technique::ALL {
        let mut guards = vec![GuardConfig::none()];
        if t == Technique::Cps {
            guards.push(GuardConfig::cyclic_extension(GuardMode::CeAfterPs, p.guard_len, p.m));
        }
        for g in guards {
            let cfg = p.cfg(t, g);
            let direct = DirectModem::new(&cfg)?;
            let fast = FastModem::new(&cfg)?;
            let mut err: f64 = 0.0;
            for i in 0..p.grids {
                let d = random_grid(&mut frame_rng(p.seed, i as u64), order, cfg.m, cfg.n);
                let want = direct.modulate(&d)?;
                let got = fast.modulate(&d, &mut CmCounter::new())?;
                err = err.max(max_abs(&want.stream.samples, &got.stream.samples));
                if want.stream.start_index != got.stream.start_index {
                    err = f64::INFINITY;
                }
                let rx_d = direct.demodulate(&want.stream)?;
                let rx_f = fast.demodulate(&want.stream, &mut CmCounter::new())?;
                err = err.max(max_abs_m(&rx_d.symbols, &rx_f.symbols));
            }
            let detail = format!("{} grids, M={} N={} L_us={} Q={:?}", p.grids, cfg.m, cfg.n, cfg.l_us, cfg.q);
            out.push(Check::tolerance(format!("fast_vs_direct/{}", label(t, &g)), err, MODEM_TOL, detail));
        }
    }
    Ok(out)
}

/// `H_eff·E_data·d` against modulate → channel → demodulate, and the dense
/// structured-matrix product against the column-wise construction.
pub fn check_matrix_vs_chain(p: &VerifyParams) -> Result<Vec<Check>> {
    let order = QamOrder::new(4)?;
    let spec = ChannelSpec { bandwidth_hz: 1.0 / p.base.delta_tau, ..p.channel.clone() };
    let mut out = Vec::new();
    for t in Technique::ALL {
        for g in p.guards(t) {
            let cfg = p.cfg(t, g);
            let modem = DirectModem::new(&cfg)?;
            let builder = HeffBuilder::new(modem.clone())?;
            let mut chain_err: f64 = 0.0;
            let mut dense_err: f64 = 0.0;
            for c in 0..p.channels {
                let ch = generate_channel(&spec, cfg.l_us, p.seed.wrapping_add(c as u64))?;
                let heff = builder.build(&ch)?;
                let a = data_channel(&heff, &cfg);
                let d = random_grid(&mut frame_rng(p.seed ^ 0x5eed, c as u64), order, cfg.m, cfg.n);
                let tx = modem.modulate(&d)?;
                let rx = modem.demodulate(&apply_channel(&ch, &tx.stream, modem.geometry().cp)?)?;
                chain_err = chain_err.max(max_abs(&matvec(&a, &d.to_vector()), &rx.to_vector()));
                if c == 0 {
                    let mats = build_structured(&cfg, modem.pulse())?;
                    let dense = build_heff_dense(&mats, &ch)?;
                    dense_err = max_abs_m(&dense.h_eff, &heff.h_eff).max(max_abs_m(&dense.noise_cov, &heff.noise_cov));
                }
            }
            let detail = format!("{} channel draws ({}), M={} N={}", p.channels, spec.profile.name(), cfg.m, cfg.n);
            out.push(Check::tolerance(format!("matrix_vs_chain/{}", label(t, &g)), chain_err, CHAIN_TOL, detail));
            out.push(Check::tolerance(
                format!("dense_vs_columnwise/{}", label(t, &g)),
                dense_err,
                MODEM_TOL,
                "structured-matrix product vs column-wise build, first draw".into(),
            ));
        }
    }
    Ok(out)
}

/// Instrumented counters against the closed-form cost of every table row.
pub fn check_cost_table(p: &VerifyParams) -> Result<Vec<Check>> {
    let order = QamOrder::new(4)?;
    let mut out = Vec::new();
    let mut push = |name: String, got: CmCounter, want: ddpulse::dft::CmCount| {
        let g = got.total();
        let err = (g.as_f64() - want.as_f64()).abs();
        out.push(Check {
            name,
            passed: g == want,
            max_error: err,
            tolerance: 0.0,
            detail: format!("counted {g} CM, predicted {want} CM"),
        });
    };
    for t in Technique::ALL {
        let cfg = p.cfg(t, GuardConfig::none());
        let params = CmParams::of(&cfg);
        let d = random_grid(&mut frame_rng(p.seed, 0), order, cfg.m, cfg.n);
        let fast = FastModem::new(&cfg)?;
        let mut tx = CmCounter::new();
        let out_tx = fast.modulate(&d, &mut tx)?;
        push(format!("cost/{}/fast/modulate", t.name()), tx, predict_cm(t, Implementation::Fast, &params)?);
        let mut rx = CmCounter::new();
        fast.demodulate(&out_tx.stream, &mut rx)?;
        push(format!("cost/{}/fast/demodulate", t.name()), rx, predict_cm(t, Implementation::Fast, &params)?);
        let mut cm = CmCounter::new();
        match t {
            Technique::Cps | Technique::Lps => {
                direct_shape_counted(&d, &cfg, &mut cm)?;
                push(format!("cost/{}/direct", t.name()), cm, predict_cm(t, Implementation::Direct, &params)?);
            }
            Technique::Oddm => {
                reference_oddm_counted(&d, &cfg, &mut cm)?;
                let want = predict_cm(t, Implementation::ReferenceOddm, &params)?;
                push(format!("cost/{}/reference_oddm", t.name()), cm, want);
            }
        }
    }
    Ok(out)
}

pub fn run_suite(p: &VerifyParams) -> Result<Vec<Check>> {
    let mut checks = check_fast_vs_direct(p)?;
    checks.extend(check_matrix_vs_chain(p)?);
    checks.extend(check_cost_table(p)?);
    Ok(checks)
}
