//! Discrete Fourier transforms with complex-multiplication accounting.
//!
//! Power-of-two lengths use an iterative radix-2 kernel whose butterfly count
//! is exactly `(L/2)·log2 L`, which is the cost model the complexity tables
//! are written in. Other lengths (e.g. guard-extended delay blocks) go through
//! Bluestein's chirp-z algorithm on a power-of-two kernel.
//!
//! All transforms here are *unnormalized*; callers apply the symmetric
//! `1/sqrt(L)` scaling themselves (a real scaling, never counted as a CM).

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use crate::C64;

/// Complex-multiplication tally, kept in half-CM units so that the
/// real-coefficient multiplications of the shaping stages (½ CM each) stay
/// integral.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CmCount {
    half: u64,
}

impl CmCount {
    pub const ZERO: CmCount = CmCount { half: 0 };

    pub fn from_cms(cms: u64) -> Self {
        CmCount { half: 2 * cms }
    }

    pub fn from_half_cms(half: u64) -> Self {
        CmCount { half }
    }

    pub fn half_cms(self) -> u64 {
        self.half
    }

    pub fn as_f64(self) -> f64 {
        self.half as f64 / 2.0
    }
}

impl core::ops::Add for CmCount {
    type Output = CmCount;
    fn add(self, rhs: CmCount) -> CmCount {
        CmCount { half: self.half + rhs.half }
    }
}

impl core::ops::AddAssign for CmCount {
    fn add_assign(&mut self, rhs: CmCount) {
        self.half += rhs.half;
    }
}

impl fmt::Display for CmCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.half % 2 == 0 {
            write!(f, "{}", self.half / 2)
        } else {
            write!(f, "{}.5", self.half / 2)
        }
    }
}

/// Running CM tally for one modulate/demodulate call.
#[derive(Clone, Debug, Default)]
pub struct CmCounter {
    /// Butterflies executed by the FFT kernels.
    pub fft: CmCount,
    /// Charged by the shaping stages (frequency-domain pulse multiplication).
    pub shaping: CmCount,
    /// Multiplications actually executed by the shaping stages, in the same
    /// units. May exceed `shaping` where the cost model treats structurally
    /// required work as free; reported for transparency only.
    pub shaping_executed: CmCount,
}

impl CmCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn total(&self) -> CmCount {
        self.fft + self.shaping
    }
}

/// Twiddle/butterfly schedule for a power-of-two FFT.
#[derive(Clone, Debug)]
struct Radix2 {
    n: usize,
    log2: u32,
    /// `e^{-j2πk/n}` for k in 0..n/2.
    twiddles: Vec<C64>,
}

impl Radix2 {
    fn new(n: usize) -> Self {
        debug_assert!(n.is_power_of_two());
        let twiddles = (0..n / 2)
            .map(|k| cis(-2.0 * PI * k as f64 / n as f64))
            .collect();
        Radix2 { n, log2: n.trailing_zeros(), twiddles }
    }

    fn run(&self, buf: &mut [C64], inverse: bool, cm: &mut CmCounter) {
        let n = self.n;
        if n <= 1 {
            return;
        }
        let shift = usize::BITS - self.log2;
        for i in 0..n {
            let j = i.reverse_bits() >> shift;
            if j > i {
                buf.swap(i, j);
            }
        }
        let mut half = 1;
        while half < n {
            let step = n / (2 * half);
            for start in (0..n).step_by(2 * half) {
                for k in 0..half {
                    let mut w = self.twiddles[k * step];
                    if inverse {
                        w = w.conj();
                    }
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            half *= 2;
        }
        cm.fft += CmCount::from_cms((n as u64 / 2) * self.log2 as u64);
    }
}

#[derive(Clone, Debug)]
struct Bluestein {
    n: usize,
    inner: Radix2,
    /// `e^{-jπk²/n}` for k in 0..n.
    chirp: Vec<C64>,
    /// FFT of the conjugate chirp, zero-padded/wrapped to the inner length.
    kernel: Vec<C64>,
}

impl Bluestein {
    fn new(n: usize) -> Self {
        let len = (2 * n - 1).next_power_of_two();
        let inner = Radix2::new(len);
        // k² mod 2n keeps the phase argument small for large n.
        let chirp: Vec<C64> = (0..n)
            .map(|k| {
                let k2 = (k as u128 * k as u128 % (2 * n as u128)) as f64;
                cis(-PI * k2 / n as f64)
            })
            .collect();
        let mut kernel = vec![C64::new(0.0, 0.0); len];
        kernel[0] = chirp[0].conj();
        for k in 1..n {
            kernel[k] = chirp[k].conj();
            kernel[len - k] = chirp[k].conj();
        }
        inner.run(&mut kernel, false, &mut CmCounter::new());
        Bluestein { n, inner, chirp, kernel }
    }

    fn run(&self, buf: &mut [C64], inverse: bool, cm: &mut CmCounter) {
        // The inverse is the conjugated forward transform of the conjugate.
        if inverse {
            buf.iter_mut().for_each(|v| *v = v.conj());
        }
        let len = self.inner.n;
        let mut work = vec![C64::new(0.0, 0.0); len];
        for k in 0..self.n {
            work[k] = buf[k] * self.chirp[k];
        }
        self.inner.run(&mut work, false, cm);
        for (w, h) in work.iter_mut().zip(&self.kernel) {
            *w *= h;
        }
        self.inner.run(&mut work, true, cm);
        let scale = 1.0 / len as f64;
        for k in 0..self.n {
            buf[k] = work[k] * self.chirp[k] * scale;
        }
        if inverse {
            buf.iter_mut().for_each(|v| *v = v.conj());
        }
        cm.fft += CmCount::from_cms(2 * self.n as u64 + len as u64);
    }
}

#[derive(Clone, Debug)]
enum Kernel {
    Trivial,
    Radix2(Radix2),
    Bluestein(Bluestein),
}

/// A precomputed length-`n` transform.
#[derive(Clone, Debug)]
pub struct Fft {
    n: usize,
    kernel: Kernel,
}

impl Fft {
    pub fn new(n: usize) -> Self {
        let kernel = if n <= 1 {
            Kernel::Trivial
        } else if n.is_power_of_two() {
            Kernel::Radix2(Radix2::new(n))
        } else {
            Kernel::Bluestein(Bluestein::new(n))
        };
        Fft { n, kernel }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `X[k] = Σ x[n] e^{-j2πkn/L}` in place.
    pub fn forward(&self, buf: &mut [C64], cm: &mut CmCounter) {
        self.run(buf, false, cm)
    }

    /// `x[n] = Σ X[k] e^{+j2πkn/L}` in place (no 1/L).
    pub fn inverse(&self, buf: &mut [C64], cm: &mut CmCounter) {
        self.run(buf, true, cm)
    }

    /// Forward transform scaled by `1/sqrt(L)`.
    pub fn unitary_forward(&self, buf: &mut [C64], cm: &mut CmCounter) {
        self.run(buf, false, cm);
        scale(buf, 1.0 / libm::sqrt(self.n as f64));
    }

    /// Inverse transform scaled by `1/sqrt(L)`.
    pub fn unitary_inverse(&self, buf: &mut [C64], cm: &mut CmCounter) {
        self.run(buf, true, cm);
        scale(buf, 1.0 / libm::sqrt(self.n as f64));
    }

    fn run(&self, buf: &mut [C64], inverse: bool, cm: &mut CmCounter) {
        assert_eq!(buf.len(), self.n, "buffer length does not match transform length");
        match &self.kernel {
            Kernel::Trivial => {}
            Kernel::Radix2(r) => r.run(buf, inverse, cm),
            Kernel::Bluestein(b) => b.run(buf, inverse, cm),
        }
    }
}

pub(crate) fn scale(buf: &mut [C64], s: f64) {
    for v in buf {
        *v *= s;
    }
}

#[inline]
pub fn cis(theta: f64) -> C64 {
    C64::new(libm::cos(theta), libm::sin(theta))
}

/// `(L/2)·log2 L` — the radix-2 cost model of one L-point transform.
pub fn radix2_cost(len: usize) -> u64 {
    debug_assert!(len.is_power_of_two());
    (len as u64 / 2) * len.trailing_zeros() as u64
}
