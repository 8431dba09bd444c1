//! One function per `--run`, each writing its CSV files into the output
//! directory.
//!
//! | run          | file             | columns |
//! |--------------|------------------|---------|
//! | `psd`        | `psd.csv`        | `series, freq, power_db` (dB relative to the in-band level) |
//! |              | `oob.csv`        | `series, technique, guard, guard_length, band_edge, offset, oob_db` |
//! | `ber`        | `ber.csv`        | `technique, guard, guard_length, qam_order, alpha, velocity_kmh, ebn0_db, trials, bit_errors, total_bits, ber, ci95_low, ci95_high` |
//! | `papr`       | `papr.csv`       | `technique, guard, alpha, threshold_db, ccdf` |
//! | `complexity` | `complexity.csv` | `technique, implementation, m, n, l_us, q, cm` |
//! | `verify`     | `verify.csv`     | `check, passed, max_error, tolerance, detail` |
//!
//! Exports requested in the configuration add `pulse.csv` (`l_prime,
//! value`), `channel.json` and `heff.bin`.

use std::path::PathBuf;

use anyhow::{Context, Result};
use ddpulse::channel::{generate_channel, ChannelSpec};
use ddpulse::effective::HeffBuilder;
use ddpulse::metrics::{papr_ccdf_from_values, BerContext, StopRule};
use ddpulse::modem::DirectModem;
use ddpulse::qam::QamOrder;
use ddpulse::ModemConfig;

use crate::config::{ExperimentConfig, RunKind};
use crate::experiments::{
    ber_point, complexity_sweep, lps_crossover, oob_band, papr_values, psd_series, PsdParams,
};
use crate::export::{write_channel, write_heff, write_pulse_csv};
use crate::output::{num, write_csv, Metadata};
use crate::verify::{run_suite, VerifyParams};

/// What a run produced.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// False only when a verification check failed.
    pub passed: bool,
    /// Human-readable summary, one line per item.
    pub report: Vec<String>,
}

/// Runs `cfg` (assumed validated) and writes its artifacts under
/// `cfg.output`.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    std::fs::create_dir_all(&cfg.output).with_context(|| format!("creating {}", cfg.output.display()))?;
    let mut out = match cfg.run {
        RunKind::Psd => run_psd(cfg)?,
        RunKind::Ber => run_ber(cfg)?,
        RunKind::Papr => run_papr(cfg)?,
        RunKind::Complexity => run_complexity(cfg)?,
        RunKind::Verify => run_verify(cfg)?,
    };
    export(cfg, &mut out)?;
    Ok(out)
}

fn channel_for(cfg: &ExperimentConfig, modem: &ModemConfig) -> ChannelSpec {
    ChannelSpec { bandwidth_hz: 1.0 / modem.delta_tau, ..cfg.channel_spec() }
}

fn run_psd(cfg: &ExperimentConfig) -> Result<Outcome> {
    let base = cfg.modem_config();
    let p = PsdParams {
        frames: cfg.psd.frames,
        seg_len: cfg.psd.seg_len,
        overlap: cfg.psd.overlap,
        order: QamOrder::new(cfg.psd.qam_order)?,
        seed: cfg.seed,
    };
    let series = psd_series(&base, cfg.psd.guard_length, p)?;
    let first = &series[0].psd;
    let meta = Metadata::new(cfg)
        .with("taper", &first.taper)
        .with("seg_len", first.seg_len)
        .with("overlap", first.overlap)
        .with("segments_per_series", first.segments)
        .with("reference_level", "mean of bins within 3 dB of the peak = 0 dB");
    let dir = &cfg.output;
    let psd_path = dir.join("psd.csv");
    let rows = series.iter().flat_map(|s| {
        s.psd.freqs.iter().zip(&s.psd.power_db).map(move |(f, p)| [s.name.to_string(), num(*f), num(*p)])
    });
    write_csv(&psd_path, &meta, &["series", "freq", "power_db"], rows)?;
    let oob_path = dir.join("oob.csv");
    let (edge, offset) = oob_band(&base);
    let rows: Vec<_> = series
        .iter()
        .map(|s| {
            [
                s.name.to_string(),
                s.cfg.technique.name().to_string(),
                s.cfg.guard.mode.name().to_string(),
                s.cfg.guard.length.to_string(),
                num(edge),
                num(offset),
                num(s.oob_db),
            ]
        })
        .collect();
    write_csv(&oob_path, &meta, &["series", "technique", "guard", "guard_length", "band_edge", "offset", "oob_db"], rows)?;
    let report = series.iter().map(|s| format!("{:<12} OOB {:8.2} dB", s.name, s.oob_db)).collect();
    Ok(Outcome { files: vec![psd_path, oob_path], passed: true, report })
}

fn run_ber(cfg: &ExperimentConfig) -> Result<Outcome> {
    let order = QamOrder::new(cfg.ber.qam_order)?;
    let stop = StopRule { min_errors: cfg.ber.min_errors, max_trials: cfg.trials };
    let mut rows = Vec::new();
    let mut report = Vec::new();
    for alpha in cfg.alpha_points() {
        let modem = ModemConfig { alpha, ..cfg.modem_config() };
        for v in cfg.velocity_points() {
            let spec = ChannelSpec { velocity_kmh: v, ..channel_for(cfg, &modem) };
            let ctx = BerContext::new(&modem, &spec, order, cfg.ber.covariance)?;
            for ebn0 in cfg.ebn0_points() {
                let r = ber_point(&ctx, ebn0, stop, cfg.seed)?;
                let (lo, hi) = r.ci95();
                report.push(format!(
                    "alpha={alpha} v={v} km/h Eb/N0={ebn0} dB: BER {:.3e} ({} errors / {} bits, {} frames)",
                    r.ber, r.bit_errors, r.total_bits, r.trials
                ));
                rows.push([
                    modem.technique.name().to_string(),
                    modem.guard.mode.name().to_string(),
                    modem.guard.length.to_string(),
                    r.order.to_string(),
                    num(alpha),
                    num(v),
                    num(ebn0),
                    r.trials.to_string(),
                    r.bit_errors.to_string(),
                    r.total_bits.to_string(),
                    num(r.ber),
                    num(lo),
                    num(hi),
                ]);
            }
        }
    }
    let path = cfg.output.join("ber.csv");
    let meta = Metadata::new(cfg)
        .with("detector", format!("linear MMSE, {:?} noise covariance", cfg.ber.covariance))
        .with("stop_rule", format!("{} bit errors or {} frames", stop.min_errors, stop.max_trials))
        .with("ci", "Wilson 95%");
    let header = [
        "technique", "guard", "guard_length", "qam_order", "alpha", "velocity_kmh", "ebn0_db", "trials", "bit_errors",
        "total_bits", "ber", "ci95_low", "ci95_high",
    ];
    write_csv(&path, &meta, &header, rows)?;
    Ok(Outcome { files: vec![path], passed: true, report })
}

fn run_papr(cfg: &ExperimentConfig) -> Result<Outcome> {
    let order = QamOrder::new(cfg.papr.qam_order)?;
    let mut rows = Vec::new();
    let mut report = Vec::new();
    for alpha in cfg.alpha_points() {
        let modem = ModemConfig { alpha, ..cfg.modem_config() };
        let values = papr_values(&modem, cfg.papr.frames, order, cfg.seed)?;
        let ccdf = papr_ccdf_from_values(&values, &cfg.papr.thresholds_db)?;
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        report.push(format!("alpha={alpha}: mean PAPR {mean:.2} dB over {} frames", values.len()));
        for (t, c) in ccdf.thresholds_db.iter().zip(&ccdf.ccdf) {
            rows.push([
                modem.technique.name().to_string(),
                modem.guard.mode.name().to_string(),
                num(alpha),
                num(*t),
                num(*c),
            ]);
        }
    }
    let path = cfg.output.join("papr.csv");
    let meta = Metadata::new(cfg)
        .with("frames", cfg.papr.frames)
        .with("measurement", "max|x|^2 / mean|x|^2 over the CP-stripped oversampled frame");
    write_csv(&path, &meta, &["technique", "guard", "alpha", "threshold_db", "ccdf"], rows)?;
    Ok(Outcome { files: vec![path], passed: true, report })
}

fn run_complexity(cfg: &ExperimentConfig) -> Result<Outcome> {
    let m = cfg.modem_config();
    let rows = complexity_sweep(&m, &cfg.q_points())?;
    let crossover = lps_crossover(&rows);
    let crossover_text = crossover.map_or("none".to_string(), |q| q.to_string());
    let path = cfg.output.join("complexity.csv");
    let meta = Metadata::new(cfg).with("lps_crossover_q", &crossover_text).with("unit", "complex multiplications per frame");
    let body = rows.iter().map(|r| {
        [
            r.technique.name().to_string(),
            r.implementation.name().to_string(),
            m.m.to_string(),
            m.n.to_string(),
            m.l_us.to_string(),
            r.q.to_string(),
            num(r.cm),
        ]
    });
    write_csv(&path, &meta, &["technique", "implementation", "m", "n", "l_us", "q", "cm"], body)?;
    let report = vec![match crossover {
        Some(q) => format!("direct L-PS exceeds fast L-PS from Q = {q} (2Q/M = {:.1}%)", 200.0 * q as f64 / m.m as f64),
        None => "direct L-PS stays cheaper than fast L-PS over the sweep".into(),
    }];
    Ok(Outcome { files: vec![path], passed: true, report })
}

fn run_verify(cfg: &ExperimentConfig) -> Result<Outcome> {
    let base = cfg.modem_config();
    let p = VerifyParams {
        base: base.clone(),
        m: cfg.verify.m,
        n: cfg.verify.n,
        grids: cfg.verify.grids,
        channels: cfg.verify.channels,
        channel: channel_for(cfg, &base),
        guard_len: cfg.psd.guard_length.min(cfg.verify.m / 4).max(1),
        seed: cfg.seed,
    };
    let checks = run_suite(&p)?;
    let path = cfg.output.join("verify.csv");
    let rows = checks.iter().map(|c| {
        [c.name.clone(), c.passed.to_string(), format!("{:.3e}", c.max_error), format!("{:.0e}", c.tolerance), c.detail.clone()]
    });
    write_csv(&path, &Metadata::new(cfg), &["check", "passed", "max_error", "tolerance", "detail"], rows)?;
    let report = checks
        .iter()
        .map(|c| format!("{} {:<40} max err {:.3e} (tol {:.0e}) {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.max_error, c.tolerance, c.detail))
        .collect();
    Ok(Outcome { files: vec![path], passed: checks.iter().all(|c| c.passed), report })
}

fn export(cfg: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    let e = &cfg.export;
    if !(e.pulse || e.channel || e.heff) {
        return Ok(());
    }
    let m = cfg.modem_config();
    let modem = DirectModem::new(&m)?;
    if e.pulse {
        let path = cfg.output.join("pulse.csv");
        write_pulse_csv(&path, modem.pulse(), &Metadata::new(cfg))?;
        out.files.push(path);
    }
    if e.channel || e.heff {
        let ch = generate_channel(&channel_for(cfg, &m), m.l_us, cfg.seed)?;
        if e.channel {
            let path = cfg.output.join("channel.json");
            write_channel(&path, &ch)?;
            out.files.push(path);
        }
        if e.heff {
            let path = cfg.output.join("heff.bin");
            write_heff(&path, &HeffBuilder::new(modem)?.build(&ch)?.h_eff)?;
            out.files.push(path);
        }
    }
    Ok(())
}
