//! Inspection exports: pulse taps, channel realizations and `H_eff`.
//!
//! `H_eff` files are a 16-byte header — the 8-byte magic `DDPHEFF1`, then
//! rows and columns as little-endian `u32` — followed by the matrix in
//! row-major order, each entry as two little-endian `f64` (re, im).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use ddpulse::channel::ChannelRealization;
use ddpulse::pulse::PulsePrototype;
use ddpulse::{CMatrix, C64};

use crate::output::{num, write_csv, Metadata};

pub const HEFF_MAGIC: [u8; 8] = *b"DDPHEFF1";

/// `l_prime,value` for every linear tap; `l_prime` in oversampled samples
/// relative to the pulse centre.
pub fn write_pulse_csv(path: &Path, pulse: &PulsePrototype, meta: &Metadata) -> Result<()> {
    let meta = meta
        .clone()
        .with("pulse", format!("srrc alpha={} m={} l_us={} truncation={:?}", pulse.alpha, pulse.m, pulse.l_us, pulse.truncation));
    let rows = pulse.taps.iter().enumerate().map(|(i, &v)| [(pulse.origin + i as isize).to_string(), num(v)]);
    write_csv(path, &meta, &["l_prime", "value"], rows)
}

pub fn write_channel(path: &Path, ch: &ChannelRealization) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, ch)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_channel(path: &Path) -> Result<ChannelRealization> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

pub fn write_heff(path: &Path, h: &CMatrix) -> Result<()> {
    let (rows, cols) = h.shape();
    let (r32, c32) = (u32::try_from(rows)?, u32::try_from(cols)?);
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    w.write_all(&HEFF_MAGIC)?;
    w.write_all(&r32.to_le_bytes())?;
    w.write_all(&c32.to_le_bytes())?;
    for r in 0..rows {
        for c in 0..cols {
            let v = h[(r, c)];
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_heff(path: &Path) -> Result<CMatrix> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut r = BufReader::new(file);
    let mut header = [0u8; 16];
    r.read_exact(&mut header).context("truncated header")?;
    if header[..8] != HEFF_MAGIC {
        bail!("{} is not an H_eff file", path.display());
    }
    let rows = u32::from_le_bytes(header[8..12].try_into()?) as usize;
    let cols = u32::from_le_bytes(header[12..16].try_into()?) as usize;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    ensure!(body.len() == rows * cols * 16, "expected {} payload bytes, found {}", rows * cols * 16, body.len());
    let f = |i: usize| f64::from_le_bytes(body[8 * i..8 * i + 8].try_into().unwrap());
    Ok(CMatrix::from_fn(rows, cols, |i, j| {
        let k = 2 * (i * cols + j);
        C64::new(f(k), f(k + 1))
    }))
}
