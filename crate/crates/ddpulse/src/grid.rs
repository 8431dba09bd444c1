//! Signal containers for the delay-Doppler, time-frequency and delay-time
//! domains, and the serialized sample stream.

use alloc::vec::Vec;

use crate::{CMatrix, C64};

/// Data symbols `D[l, k]`: rows are delay bins, columns Doppler bins.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayDopplerGrid {
    pub symbols: CMatrix,
}

impl DelayDopplerGrid {
    pub fn new(symbols: CMatrix) -> Self {
        DelayDopplerGrid { symbols }
    }

    pub fn zeros(m_d: usize, n: usize) -> Self {
        Self::new(CMatrix::zeros(m_d, n))
    }

    /// Delay rows `M_d`.
    pub fn m_d(&self) -> usize {
        self.symbols.nrows()
    }

    pub fn n(&self) -> usize {
        self.symbols.ncols()
    }

    /// Stacks the grid as `d[l + k·M_d] = D[l, k]`.
    pub fn to_vector(&self) -> Vec<C64> {
        self.symbols.as_slice().to_vec()
    }

    pub fn from_vector(m_d: usize, n: usize, d: &[C64]) -> Self {
        Self::new(CMatrix::from_column_slice(m_d, n, d))
    }

    pub fn energy(&self) -> f64 {
        self.symbols.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// `X[m, n]`: rows are frequency bins, columns time slots.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeFrequencyGrid {
    pub values: CMatrix,
}

/// Per-slot delay-time blocks `X[l', n]`. Row `i` holds delay index
/// `delay_origin + i`.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayTimeGrid {
    pub values: CMatrix,
    pub delay_origin: isize,
}

impl DelayTimeGrid {
    /// Block length `γ'`.
    pub fn block_len(&self) -> usize {
        self.values.nrows()
    }

    pub fn n(&self) -> usize {
        self.values.ncols()
    }
}

/// Complex baseband samples; element `i` is sample index `start_index + i`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleStream {
    pub samples: Vec<C64>,
    pub start_index: isize,
    pub rate_factor: usize,
}

impl SampleStream {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Sample at absolute index `kappa`, zero outside the stream.
    pub fn at(&self, kappa: isize) -> C64 {
        let i = kappa - self.start_index;
        if i < 0 || i as usize >= self.samples.len() {
            C64::new(0.0, 0.0)
        } else {
            self.samples[i as usize]
        }
    }
}
