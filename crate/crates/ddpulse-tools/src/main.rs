use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ddpulse_tools::config::{read_config, ConfigError, ExperimentConfig, RunKind};

/// Delay-Doppler pulse-shaping experiments.
///
/// Exit status: 0 on success, 1 when verification fails (or a run errors),
/// 2 for configuration errors.
#[derive(Parser, Debug)]
#[command(name = "ddpulse", version = env!("CARGO_PKG_VERSION"), long_version = concat!(env!("CARGO_PKG_VERSION"), " (git ", env!("DDPULSE_GIT_REV"), ")"))]
struct Cli {
    /// JSON configuration; omitted or empty means the reference defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configuration's `run`.
    #[arg(long, value_enum)]
    run: Option<RunKind>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `output`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the Monte-Carlo loops (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(p) => read_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(r) = cli.run {
        cfg.run = r;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output = o.clone();
    }
    if cli.threads == Some(0) {
        return Err(ConfigError("--threads must be at least 1".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("cannot start {n} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    match ddpulse_tools::run(&cfg) {
        Ok(out) => {
            for line in &out.report {
                println!("{line}");
            }
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            if out.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("verification failed");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
