//! Experiment configuration: a JSON document whose every field is optional.
//!
//! Missing fields take the reference parameter block (`M=128, N=32, L_us=4,
//! α=0.1, Q=12`, EVA at 500 km/h, 5.9 GHz carrier, 1.92 MHz); an empty file
//! is the full default set.
//!
//! ```json
//! {
//!   "run": "ber",
//!   "seed": 7,
//!   "modem": { "m": 64, "n": 16, "technique": "oddm",
//!              "guard": { "mode": "zero_guard", "length": 6 } },
//!   "channel": { "profile": "eva", "velocity_kmh": 250 },
//!   "sweep": { "ebn0_db": [10, 14, 18] },
//!   "trials": 50,
//!   "ber": { "qam_order": 16, "min_errors": 200 }
//! }
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use ddpulse::channel::{ChannelProfile, ChannelSpec, DopplerModel};
use ddpulse::effective::NoiseCovariance;
use ddpulse::metrics::MIN_PAPR_FRAMES;
use ddpulse::qam::QamOrder;
use ddpulse::{GuardConfig, GuardMode, ModemConfig, Technique};
use serde::{Deserialize, Serialize};

/// Invalid or unreadable configuration; the CLI maps it to exit status 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

macro_rules! invalid {
    ($($arg:tt)*) => { return Err(ConfigError(format!($($arg)*))) };
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    #[default]
    Psd,
    Ber,
    Papr,
    Complexity,
    Verify,
}

impl RunKind {
    pub fn name(self) -> &'static str {
        match self {
            RunKind::Psd => "psd",
            RunKind::Ber => "ber",
            RunKind::Papr => "papr",
            RunKind::Complexity => "complexity",
            RunKind::Verify => "verify",
        }
    }

    /// Sweep axes the run understands.
    fn axes(self) -> &'static [&'static str] {
        match self {
            RunKind::Ber => &["ebn0_db", "velocity_kmh", "alpha"],
            RunKind::Papr => &["alpha"],
            RunKind::Complexity => &["q"],
            RunKind::Psd | RunKind::Verify => &[],
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModemImpl {
    #[default]
    Direct,
    Fast,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuardSection {
    pub mode: GuardMode,
    /// `L_ZG` or `L_CE` in delay bins.
    pub length: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModemSection {
    pub m: usize,
    pub n: usize,
    pub l_us: usize,
    pub alpha: f64,
    /// `null` keeps the untruncated pulse.
    pub q: Option<usize>,
    /// Cyclic prefix in delay bins.
    pub l_cp: usize,
    pub technique: Technique,
    pub guard: GuardSection,
    pub implementation: ModemImpl,
}

impl Default for ModemSection {
    fn default() -> Self {
        let r = ModemConfig::reference();
        ModemSection {
            m: r.m,
            n: r.n,
            l_us: r.l_us,
            alpha: r.alpha,
            q: r.q,
            l_cp: r.l_cp,
            technique: r.technique,
            guard: GuardSection::default(),
            implementation: ModemImpl::Direct,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub profile: ChannelProfile,
    pub velocity_kmh: f64,
    pub carrier_hz: f64,
    /// Base-rate bandwidth; also fixes `Δτ = 1/BW`.
    pub bandwidth_hz: f64,
    pub doppler: DopplerModel,
}

impl Default for ChannelSection {
    fn default() -> Self {
        let r = ChannelSpec::reference();
        ChannelSection {
            profile: r.profile,
            velocity_kmh: r.velocity_kmh,
            carrier_hz: r.carrier_hz,
            bandwidth_hz: r.bandwidth_hz,
            doppler: r.doppler,
        }
    }
}

/// Sweep axes; an absent axis means the single value from `modem`/`channel`
/// (or, for Eb/N0 and Q, the run's default list).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub ebn0_db: Option<Vec<f64>>,
    pub velocity_kmh: Option<Vec<f64>>,
    pub alpha: Option<Vec<f64>>,
    pub q: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BerSection {
    pub qam_order: u32,
    /// Stop a point once this many bit errors are counted.
    pub min_errors: u64,
    pub covariance: NoiseCovariance,
}

impl Default for BerSection {
    fn default() -> Self {
        BerSection { qam_order: 16, min_errors: 200, covariance: NoiseCovariance::Exact }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsdSection {
    pub frames: usize,
    pub seg_len: usize,
    pub overlap: usize,
    /// `L_ZG` / `L_CE` of the guarded C-PS series.
    pub guard_length: usize,
    pub qam_order: u32,
}

impl Default for PsdSection {
    fn default() -> Self {
        PsdSection { frames: 10, seg_len: 2048, overlap: 1024, guard_length: 6, qam_order: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PaprSection {
    pub frames: usize,
    pub qam_order: u32,
    pub thresholds_db: Vec<f64>,
}

impl Default for PaprSection {
    fn default() -> Self {
        PaprSection { frames: 1000, qam_order: 4, thresholds_db: (0..=40).map(|i| 4.0 + 0.25 * i as f64).collect() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub m: usize,
    pub n: usize,
    /// Random grids per modem comparison.
    pub grids: usize,
    /// Channel draws per matrix/chain comparison.
    pub channels: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection { m: 32, n: 8, grids: 20, channels: 5 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportSection {
    /// `pulse.csv`: linear taps of the configured pulse.
    pub pulse: bool,
    /// `channel.json`: one realization drawn from `seed`.
    pub channel: bool,
    /// `heff.bin`: effective channel of that realization.
    pub heff: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run: RunKind,
    pub seed: u64,
    pub output: PathBuf,
    pub modem: ModemSection,
    pub channel: ChannelSection,
    pub sweep: SweepSection,
    /// Frame cap per BER point.
    pub trials: usize,
    pub ber: BerSection,
    pub psd: PsdSection,
    pub papr: PaprSection,
    pub verify: VerifySection,
    pub export: ExportSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            run: RunKind::Psd,
            seed: 1,
            output: PathBuf::from("out"),
            modem: ModemSection::default(),
            channel: ChannelSection::default(),
            sweep: SweepSection::default(),
            trials: 100,
            ber: BerSection::default(),
            psd: PsdSection::default(),
            papr: PaprSection::default(),
            verify: VerifySection::default(),
            export: ExportSection::default(),
        }
    }
}

/// Eb/N0 points of a BER run without an explicit sweep.
pub const DEFAULT_EBN0_DB: [f64; 7] = [2.0, 6.0, 10.0, 14.0, 18.0, 22.0, 26.0];

impl ExperimentConfig {
    /// Modem parameters as the core library sees them.
    pub fn modem_config(&self) -> ModemConfig {
        let s = &self.modem;
        let guard = match s.guard.mode {
            GuardMode::None => GuardConfig::none(),
            GuardMode::ZeroGuard => GuardConfig::zero_guard(s.guard.length),
            mode => GuardConfig::cyclic_extension(mode, s.guard.length, s.m),
        };
        ModemConfig {
            m: s.m,
            n: s.n,
            l_us: s.l_us,
            alpha: s.alpha,
            q: s.q,
            l_cp: s.l_cp,
            guard,
            technique: s.technique,
            delta_tau: 1.0 / self.channel.bandwidth_hz,
        }
    }

    pub fn channel_spec(&self) -> ChannelSpec {
        let c = &self.channel;
        ChannelSpec {
            profile: c.profile.clone(),
            velocity_kmh: c.velocity_kmh,
            carrier_hz: c.carrier_hz,
            bandwidth_hz: c.bandwidth_hz,
            doppler: c.doppler,
        }
    }

    pub fn ebn0_points(&self) -> Vec<f64> {
        self.sweep.ebn0_db.clone().unwrap_or_else(|| DEFAULT_EBN0_DB.to_vec())
    }

    pub fn velocity_points(&self) -> Vec<f64> {
        self.sweep.velocity_kmh.clone().unwrap_or_else(|| vec![self.channel.velocity_kmh])
    }

    pub fn alpha_points(&self) -> Vec<f64> {
        self.sweep.alpha.clone().unwrap_or_else(|| vec![self.modem.alpha])
    }

    /// Q values of a complexity sweep: every admissible truncation by default.
    pub fn q_points(&self) -> Vec<usize> {
        self.sweep.q.clone().unwrap_or_else(|| (1..=self.modem.m / 2).collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("configuration serializes")
    }

    /// Checks every invariant; the message names the one violated.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let cfg = self.modem_config();
        if !(self.channel.bandwidth_hz > 0.0 && self.channel.bandwidth_hz.is_finite()) {
            invalid!("channel.bandwidth_hz must be positive, got {}", self.channel.bandwidth_hz);
        }
        if !(self.channel.carrier_hz > 0.0 && self.channel.carrier_hz.is_finite()) {
            invalid!("channel.carrier_hz must be positive, got {}", self.channel.carrier_hz);
        }
        if !(self.channel.velocity_kmh >= 0.0 && self.channel.velocity_kmh.is_finite()) {
            invalid!("channel.velocity_kmh must be finite and non-negative, got {}", self.channel.velocity_kmh);
        }
        if let DopplerModel::SumOfSinusoids { rays: 0 } = self.channel.doppler {
            invalid!("channel.doppler: sum_of_sinusoids needs at least one ray");
        }
        if self.modem.guard.mode != GuardMode::None && self.modem.guard.length == 0 {
            invalid!("modem.guard.length must be positive for guard mode {}", self.modem.guard.mode.name());
        }
        if self.modem.guard.mode.is_ce() && self.modem.guard.length > self.modem.m {
            invalid!("modem.guard.length {} exceeds M = {}", self.modem.guard.length, self.modem.m);
        }
        cfg.validate().map_err(|e| ConfigError(format!("modem: {e}")))?;
        if self.modem.implementation == ModemImpl::Fast {
            for (name, v) in [("M_d", cfg.m_d()), ("N", cfg.n), ("L_us", cfg.l_us)] {
                if !v.is_power_of_two() {
                    invalid!("modem.implementation = fast needs power-of-two {name}, got {v}");
                }
            }
        }

        let axes = [
            ("ebn0_db", self.sweep.ebn0_db.is_some()),
            ("velocity_kmh", self.sweep.velocity_kmh.is_some()),
            ("alpha", self.sweep.alpha.is_some()),
            ("q", self.sweep.q.is_some()),
        ];
        for (axis, set) in axes {
            if set && !self.run.axes().contains(&axis) {
                invalid!("sweep.{axis} does not apply to run `{}`", self.run.name());
            }
        }
        if let Some(v) = &self.sweep.ebn0_db {
            if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
                invalid!("sweep.ebn0_db must be a non-empty list of finite dB values");
            }
        }
        if let Some(v) = &self.sweep.velocity_kmh {
            if v.is_empty() || v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                invalid!("sweep.velocity_kmh must be a non-empty list of non-negative speeds");
            }
        }
        if let Some(v) = &self.sweep.alpha {
            if v.is_empty() {
                invalid!("sweep.alpha must not be empty");
            }
            for &a in v {
                ModemConfig { alpha: a, ..cfg.clone() }
                    .validate()
                    .map_err(|e| ConfigError(format!("sweep.alpha = {a}: {e}")))?;
            }
        }
        if let Some(v) = &self.sweep.q {
            if v.is_empty() || v.iter().any(|&q| q == 0 || q > self.modem.m / 2) {
                invalid!("sweep.q entries must lie in 1..={}", self.modem.m / 2);
            }
        }

        match self.run {
            RunKind::Ber => {
                check_order("ber.qam_order", self.ber.qam_order)?;
                if self.trials == 0 {
                    invalid!("trials must be at least 1");
                }
            }
            RunKind::Psd => {
                check_order("psd.qam_order", self.psd.qam_order)?;
                if self.psd.frames == 0 {
                    invalid!("psd.frames must be at least 1");
                }
                if self.psd.seg_len == 0 || self.psd.overlap >= self.psd.seg_len {
                    invalid!("psd.overlap must be smaller than a non-zero psd.seg_len");
                }
            }
            RunKind::Papr => {
                check_order("papr.qam_order", self.papr.qam_order)?;
                if self.papr.frames < MIN_PAPR_FRAMES {
                    invalid!("papr.frames must be at least {MIN_PAPR_FRAMES}, got {}", self.papr.frames);
                }
                if self.papr.thresholds_db.is_empty() {
                    invalid!("papr.thresholds_db must not be empty");
                }
            }
            RunKind::Complexity => {
                for (name, v) in [("M", cfg.m), ("N", cfg.n), ("L_us", cfg.l_us)] {
                    if !v.is_power_of_two() {
                        invalid!("complexity needs power-of-two {name}, got {v}");
                    }
                }
            }
            RunKind::Verify => {
                let v = &self.verify;
                if !(v.m.is_power_of_two() && v.n.is_power_of_two() && v.m >= 8) {
                    invalid!("verify.m and verify.n must be powers of two with verify.m ≥ 8");
                }
                if v.grids == 0 || v.channels == 0 {
                    invalid!("verify.grids and verify.channels must be at least 1");
                }
            }
        }
        Ok(())
    }
}

fn check_order(field: &str, order: u32) -> Result<(), ConfigError> {
    QamOrder::new(order).map(|_| ()).map_err(|e| ConfigError(format!("{field}: {e}")))
}

/// Parses a configuration document; an empty (or all-whitespace) document
/// is the default configuration. Errors carry the field path and position.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    if text.trim().is_empty() {
        return Ok(ExperimentConfig::default());
    }
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ConfigError(format!("parse error at line {}, column {}, field `{path}`: {inner}", inner.line(), inner.column()))
    })
}

/// Reads, parses and validates a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let cfg = read_config(path)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and parses without validating, for callers that override fields
/// before validation.
pub fn read_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_reference_block() {
        for text in ["", "  \n", "{}"] {
            let c = parse_config(text).unwrap();
            c.validate().unwrap();
            let m = c.modem_config();
            assert_eq!((m.m, m.n, m.l_us, m.alpha, m.q), (128, 32, 4, 0.1, Some(12)));
            assert_eq!(c.channel_spec(), ChannelSpec::reference());
            assert_eq!(m.delta_tau, 1.0 / 1.92e6);
        }
    }

    #[test]
    fn non_power_of_two_fast_modem_is_rejected() {
        let c = parse_config(r#"{"modem": {"m": 12, "q": 4, "implementation": "fast"}}"#).unwrap();
        let e = c.validate().unwrap_err();
        assert!(e.0.contains("power-of-two M_d"), "{e}");
        let c = parse_config(r#"{"modem": {"m": 12, "q": 4}}"#).unwrap();
        c.validate().unwrap();
    }

    #[test]
    fn negative_ebn0_is_accepted() {
        let c = parse_config(r#"{"run": "ber", "sweep": {"ebn0_db": [-4, 0.5]}}"#).unwrap();
        c.validate().unwrap();
        assert_eq!(c.ebn0_points(), vec![-4.0, 0.5]);
    }

    #[test]
    fn parse_errors_name_the_field_and_line() {
        let e = parse_config("{\n  \"modem\": {\n    \"m\": \"many\"\n  }\n}").unwrap_err();
        assert!(e.0.contains("modem.m") && e.0.contains("line 3"), "{e}");
        let e = parse_config(r#"{"modem": {"bogus": 1}}"#).unwrap_err();
        assert!(e.0.contains("bogus"), "{e}");
    }

    #[test]
    fn sweep_axes_must_match_the_run() {
        let c = parse_config(r#"{"run": "papr", "sweep": {"ebn0_db": [1]}}"#).unwrap();
        assert!(c.validate().unwrap_err().0.contains("sweep.ebn0_db"));
        let c = parse_config(r#"{"run": "complexity", "sweep": {"q": [65]}}"#).unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn null_truncation_and_guards() {
        let c = parse_config(r#"{"modem": {"q": null, "guard": {"mode": "ce_before_ps", "length": 6}}}"#).unwrap();
        c.validate().unwrap();
        let m = c.modem_config();
        assert_eq!(m.q, None);
        assert_eq!(m.guard.beta, 6.0 / 128.0);
        let c = parse_config(r#"{"modem": {"technique": "lps", "guard": {"mode": "ce_after_ps", "length": 6}}}"#)
            .unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let c = ExperimentConfig { run: RunKind::Ber, seed: 9, ..Default::default() };
        assert_eq!(parse_config(&c.to_json()).unwrap(), c);
    }
}
