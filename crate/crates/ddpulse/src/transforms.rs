//! Unitary transforms and framing primitives shared by every modem.
//!
//! Every DFT pair uses the symmetric `1/sqrt(L)` scaling.

use alloc::vec;
use alloc::vec::Vec;

use crate::dft::{CmCounter, Fft};
use crate::error::bail;
use crate::grid::{DelayDopplerGrid, DelayTimeGrid, SampleStream, TimeFrequencyGrid};
use crate::{CMatrix, Result, C64};

/// Applies `f` to every column of `m` in place.
pub(crate) fn for_each_column(m: &mut CMatrix, mut f: impl FnMut(&mut [C64])) {
    let rows = m.nrows();
    if rows == 0 {
        return;
    }
    for col in m.as_mut_slice().chunks_exact_mut(rows) {
        f(col);
    }
}

/// Applies `f` to every row of `m` (copied through a scratch buffer).
pub(crate) fn for_each_row(m: &mut CMatrix, mut f: impl FnMut(&mut [C64])) {
    let (rows, cols) = m.shape();
    let mut buf = vec![C64::new(0.0, 0.0); cols];
    for r in 0..rows {
        for c in 0..cols {
            buf[c] = m[(r, c)];
        }
        f(&mut buf);
        for c in 0..cols {
            m[(r, c)] = buf[c];
        }
    }
}

/// Unitary DFT along delay (columns), forward or inverse.
pub(crate) fn dft_columns(m: &mut CMatrix, inverse: bool, cm: &mut CmCounter) {
    let fft = Fft::new(m.nrows());
    for_each_column(m, |c| {
        if inverse {
            fft.unitary_inverse(c, cm)
        } else {
            fft.unitary_forward(c, cm)
        }
    });
}

/// Unitary DFT along Doppler/time (rows), forward or inverse.
pub(crate) fn dft_rows(m: &mut CMatrix, inverse: bool, cm: &mut CmCounter) {
    let fft = Fft::new(m.ncols());
    for_each_row(m, |r| {
        if inverse {
            fft.unitary_inverse(r, cm)
        } else {
            fft.unitary_forward(r, cm)
        }
    });
}

/// `X[m,n] = 1/sqrt(M_d N) ΣΣ D[l,k] e^{j2π(kn/N − lm/M_d)}`.
pub fn isfft(grid: &DelayDopplerGrid) -> TimeFrequencyGrid {
    let mut v = grid.symbols.clone();
    let mut cm = CmCounter::new();
    dft_columns(&mut v, false, &mut cm);
    dft_rows(&mut v, true, &mut cm);
    TimeFrequencyGrid { values: v }
}

/// Inverse of [`isfft`].
pub fn sfft(tf: &TimeFrequencyGrid) -> DelayDopplerGrid {
    let mut v = tf.values.clone();
    let mut cm = CmCounter::new();
    dft_columns(&mut v, true, &mut cm);
    dft_rows(&mut v, false, &mut cm);
    DelayDopplerGrid::new(v)
}

/// Per-slot unitary IDFT along frequency.
pub fn ofdm_modulate(tf: &TimeFrequencyGrid) -> DelayTimeGrid {
    let mut v = tf.values.clone();
    dft_columns(&mut v, true, &mut CmCounter::new());
    DelayTimeGrid { values: v, delay_origin: 0 }
}

/// Per-slot unitary DFT along delay.
pub fn ofdm_demodulate(dt: &DelayTimeGrid) -> TimeFrequencyGrid {
    let mut v = dt.values.clone();
    dft_columns(&mut v, false, &mut CmCounter::new());
    TimeFrequencyGrid { values: v }
}

/// Zero-stuffs the delay axis: row `l·L_us` of the output is row `l` of the
/// input, every other row is zero.
pub fn expand_delay(grid: &DelayDopplerGrid, l_us: usize) -> DelayDopplerGrid {
    assert!(l_us >= 1, "oversampling factor must be at least 1");
    let (m, n) = grid.symbols.shape();
    let mut out = CMatrix::zeros(m * l_us, n);
    for k in 0..n {
        for l in 0..m {
            out[(l * l_us, k)] = grid.symbols[(l, k)];
        }
    }
    DelayDopplerGrid::new(out)
}

/// Overlap-adds the blocks at `stride`: `x[nS + delay_origin + i] += X[i, n]`.
///
/// The stream starts at the first block's `delay_origin` and is
/// `(N−1)·stride + γ'` samples long.
pub fn serialize(dt: &DelayTimeGrid, stride: usize, rate_factor: usize) -> SampleStream {
    let (gamma, n) = dt.values.shape();
    assert!(gamma >= stride, "block length shorter than the stride");
    let len = if n == 0 { 0 } else { (n - 1) * stride + gamma };
    let mut samples = vec![C64::new(0.0, 0.0); len];
    for b in 0..n {
        let col = &dt.values.as_slice()[b * gamma..(b + 1) * gamma];
        for (s, v) in samples[b * stride..b * stride + gamma].iter_mut().zip(col) {
            *s += v;
        }
    }
    SampleStream { samples, start_index: dt.delay_origin, rate_factor }
}

/// Slices `n` windows `[b·stride + origin, b·stride + origin + gamma)` out of
/// the stream, reading zeros past either end.
///
/// The stream must cover the nominal frame `[0, n·stride)`.
pub fn deserialize(
    stream: &SampleStream,
    gamma: usize,
    stride: usize,
    n: usize,
    origin: isize,
) -> Result<DelayTimeGrid> {
    let end = stream.start_index + stream.len() as isize;
    if stream.start_index > 0 || end < (n * stride) as isize {
        bail!(
            Dimension,
            "stream [{}, {}) does not cover a frame of {} blocks at stride {}",
            stream.start_index,
            end,
            n,
            stride
        );
    }
    let mut values = CMatrix::zeros(gamma, n);
    for b in 0..n {
        for i in 0..gamma {
            values[(i, b)] = stream.at((b * stride + i) as isize + origin);
        }
    }
    Ok(DelayTimeGrid { values, delay_origin: origin })
}

/// Prepends the last `cp` samples of the stream.
pub fn cp_add(stream: &SampleStream, cp: usize) -> Result<SampleStream> {
    let len = stream.len();
    if cp > len {
        bail!(Dimension, "cyclic prefix of {cp} samples exceeds stream length {len}");
    }
    let mut samples = Vec::with_capacity(len + cp);
    samples.extend_from_slice(&stream.samples[len - cp..]);
    samples.extend_from_slice(&stream.samples);
    Ok(SampleStream {
        samples,
        start_index: stream.start_index - cp as isize,
        rate_factor: stream.rate_factor,
    })
}

/// Drops the first `cp` samples.
pub fn cp_remove(stream: &SampleStream, cp: usize) -> Result<SampleStream> {
    if cp > stream.len() {
        bail!(Dimension, "cyclic prefix of {cp} samples exceeds stream length {}", stream.len());
    }
    Ok(SampleStream {
        samples: stream.samples[cp..].to_vec(),
        start_index: stream.start_index + cp as isize,
        rate_factor: stream.rate_factor,
    })
}
