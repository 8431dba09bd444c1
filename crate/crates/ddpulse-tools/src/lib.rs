//! Experiment driver for `ddpulse`: JSON configuration, CSV and binary
//! output formats, the Monte-Carlo runs and the verification suite.

pub mod config;
pub mod experiments;
pub mod export;
pub mod output;
pub mod runs;
pub mod verify;

pub use config::{load_config, parse_config, ConfigError, ExperimentConfig, RunKind};
pub use runs::{run, Outcome};
