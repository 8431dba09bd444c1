//! CSV files with a `#`-prefixed metadata block ahead of the header row.
//!
//! The metadata carries the tool version, the run, the seed, a generation
//! timestamp and the resolved configuration as one JSON line. Everything
//! after the block is a deterministic function of configuration and seed.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};

use crate::config::ExperimentConfig;

pub fn version() -> String {
    format!("{} {} (git {})", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"), env!("DDPULSE_GIT_REV"))
}

/// Ordered `key: value` lines of the metadata block.
#[derive(Clone, Debug, Default)]
pub struct Metadata {
    lines: Vec<(String, String)>,
}

impl Metadata {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Metadata::default()
            .with("version", version())
            .with("run", cfg.run.name())
            .with("seed", cfg.seed)
            .with("generated_unix", now)
            .with("config", cfg.to_json())
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.lines.push((key.to_string(), value.to_string().replace('\n', " ")));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.lines.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

/// Writes `meta`, then `header` and `rows` as CSV.
pub fn write_csv<R, I>(path: &Path, meta: &Metadata, header: &[&str], rows: R) -> Result<()>
where
    R: IntoIterator<Item = I>,
    I: IntoIterator,
    I::Item: AsRef<[u8]>,
{
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    for (k, v) in &meta.lines {
        writeln!(out, "# {k}: {v}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Splits a file written by [`write_csv`] into metadata and CSV body.
pub fn read_csv(path: &Path) -> Result<(Metadata, String)> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut meta = Metadata::default();
    let mut body = String::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        match line.strip_prefix("# ") {
            Some(kv) if body.is_empty() => {
                let (k, v) = kv.split_once(": ").unwrap_or((kv, ""));
                meta.lines.push((k.to_string(), v.to_string()));
            }
            _ => {
                body.push_str(&line);
                body.push('\n');
            }
        }
    }
    Ok((meta, body))
}

/// Shortest round-trip rendering, so equal values give equal bytes.
pub fn num(v: f64) -> String {
    format!("{v}")
}
