//! SRRC pulse prototypes, the RC edge window, and Doppler-modulated pulses.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::dft::{cis, CmCounter, Fft};
use crate::error::bail;
use crate::{Result, C64};

/// Centered SRRC frequency response `ψ̄_α[m']` over `M' = M·L_us` bins.
///
/// Bin `m'` sits at signed frequency `s = m'` for `m' ≤ M'/2` and `m' − M'`
/// above, so the response is real and even. With `d = |s|`:
/// `1/√M` for `d < (1−α)M/2`, the square-root raised-cosine transition
/// `1/√M · sqrt(½(1 + cos(π/(αM)·(d − (1−α)M/2))))` up to `(1+α)M/2`, and
/// zero beyond. The folded power `Σ_r ψ̄²[m + rM]` is exactly `1/M` for every
/// `m`, so the matched pair is Nyquist and the response has unit energy.
///
/// `α = 0` is the limit `α → 0⁺`: the two bins at `d = M/2` (present for even
/// `M`) carry `1/√(2M)`. With `L_us = 1` the response is flat.
pub fn srrc_freq(alpha: f64, m: usize, l_us: usize) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        bail!(Config, "roll-off α = {alpha} outside [0, 1]");
    }
    if m == 0 || l_us == 0 {
        bail!(Config, "M and L_us must be positive");
    }
    if alpha > 0.0 && l_us < 2 {
        bail!(Config, "M·L_us must hold the (1+α)M-wide SRRC band");
    }
    let mp = m * l_us;
    let amp = 1.0 / libm::sqrt(m as f64);
    if l_us == 1 {
        return Ok(vec![amp; mp]);
    }
    let mf = m as f64;
    let lo = (1.0 - alpha) * mf / 2.0;
    let hi = (1.0 + alpha) * mf / 2.0;
    let taps = (0..mp)
        .map(|i| {
            let d = if i <= mp / 2 { i as f64 } else { (mp - i) as f64 };
            if alpha == 0.0 {
                if d < lo {
                    amp
                } else if d == lo {
                    amp / libm::sqrt(2.0)
                } else {
                    0.0
                }
            } else if d < lo {
                amp
            } else if d <= hi {
                let arg = PI / (alpha * mf) * (d - lo);
                amp * libm::sqrt(0.5 * (1.0 + libm::cos(arg)))
            } else {
                0.0
            }
        })
        .collect();
    Ok(taps)
}

/// SRRC interpolation/matched filter.
#[derive(Clone, Debug, PartialEq)]
pub struct PulsePrototype {
    pub alpha: f64,
    pub l_us: usize,
    /// Base delay bins the pulse is designed for.
    pub m: usize,
    /// `ψ̄_α[m']`, `m' ∈ 0..M'`.
    pub freq_taps: Vec<f64>,
    /// One period of the circular pulse, `p[l' mod M']`.
    pub periodic: Vec<f64>,
    /// Truncation to `±Q` zero crossings.
    pub truncation: Option<usize>,
    /// Linear taps; `taps[i] = p[origin + i]`.
    pub taps: Vec<f64>,
    pub origin: isize,
}

impl PulsePrototype {
    pub fn m_prime(&self) -> usize {
        self.m * self.l_us
    }

    /// Circular tap `p[l' mod M']`.
    pub fn circular(&self, l: isize) -> f64 {
        let mp = self.m_prime() as isize;
        self.periodic[l.rem_euclid(mp) as usize]
    }

    /// Linear tap `p[l']`, zero outside the support.
    pub fn tap(&self, l: isize) -> f64 {
        let i = l - self.origin;
        if i < 0 || i as usize >= self.taps.len() {
            0.0
        } else {
            self.taps[i as usize]
        }
    }

    /// Taps left of the center (`−origin`).
    pub fn left(&self) -> usize {
        (-self.origin) as usize
    }

    /// Taps right of the center.
    pub fn right(&self) -> usize {
        self.taps.len() - 1 - self.left()
    }

    /// Block length after linear convolution with an `M'`-sample block:
    /// `γ' = M' + left + right` (`M' + 2Q'` when truncated).
    pub fn linear_block_len(&self) -> usize {
        self.m_prime() + self.left() + self.right()
    }
}

/// SRRC pulse as the `M'`-point unitary inverse DFT of [`srrc_freq`].
///
/// Without truncation the linear taps cover one period,
/// `l' ∈ [−⌊(M'−1)/2⌋, ⌈(M'−1)/2⌉]`; with `Q` they cover `[−Q', Q']`
/// (`2Q'+1` taps, center tap at index 0).
pub fn srrc_time(alpha: f64, m: usize, l_us: usize, q: Option<usize>) -> Result<PulsePrototype> {
    let freq_taps = srrc_freq(alpha, m, l_us)?;
    let mp = m * l_us;
    if let Some(q) = q {
        if q > m / 2 {
            bail!(Config, "truncation Q = {q} exceeds M/2 = {}", m / 2);
        }
    }
    let mut buf: Vec<C64> = freq_taps.iter().map(|&v| C64::new(v, 0.0)).collect();
    Fft::new(mp).unitary_inverse(&mut buf, &mut CmCounter::new());
    let residue = buf.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    debug_assert!(residue <= 1e-12, "SRRC pulse not real: {residue}");
    let periodic: Vec<f64> = buf.iter().map(|v| v.re).collect();
    let (origin, len) = match q {
        Some(q) => (-((q * l_us) as isize), 2 * q * l_us + 1),
        None => (-(((mp - 1) / 2) as isize), mp),
    };
    let taps = (0..len)
        .map(|i| periodic[(origin + i as isize).rem_euclid(mp as isize) as usize])
        .collect();
    Ok(PulsePrototype { alpha, l_us, m, freq_taps, periodic, truncation: q, taps, origin })
}

/// Doppler-modulated pulse `p_k[l'] = p[l']·e^{j2πkl'/(M'N)}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModulatedPulse {
    pub k: usize,
    pub n: usize,
    pub taps: Vec<C64>,
    pub origin: isize,
}

impl ModulatedPulse {
    pub fn tap(&self, l: isize) -> C64 {
        let i = l - self.origin;
        if i < 0 || i as usize >= self.taps.len() {
            C64::new(0.0, 0.0)
        } else {
            self.taps[i as usize]
        }
    }
}

pub fn modulated_pulse(p: &PulsePrototype, k: usize, n: usize) -> ModulatedPulse {
    assert!(k < n, "Doppler index {k} out of range for N = {n}");
    let period = (p.m_prime() * n) as f64;
    let taps = p
        .taps
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let l = p.origin + i as isize;
            if k == 0 {
                C64::new(v, 0.0)
            } else {
                cis(2.0 * PI * (k as isize * l) as f64 / period) * v
            }
        })
        .collect();
    ModulatedPulse { k, n, taps, origin: p.origin }
}

/// Raised-cosine edge window over a CE-extended block.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowProfile {
    pub beta: f64,
    /// `ψ_{β,w}[ℓ']`, `ℓ' ∈ 0..M'_CE`, indexed by position within the block.
    pub taps: Vec<f64>,
}

/// RC window `ψ_{β,w}` over `M'_CE = (M + ⌊βM⌋)·L_us` positions:
/// `g_β` on `[0, βM'/2]` and `[M', (1+β/2)M']`, one in between, zero past
/// `(1+β/2)M'`, with
/// `g_β[ℓ'] = ½[1 + cos(2π/β·(|ℓ' − ⌊(1+β/2)M'/2⌋|/M' − (1−β/2)/2))]`.
///
/// `β = 0` gives the all-ones window over `M'`.
pub fn rc_window(beta: f64, m: usize, l_us: usize) -> WindowProfile {
    let mp = (m * l_us) as f64;
    let l_ce = libm::floor(beta * m as f64) as usize;
    let len = (m + l_ce) * l_us;
    if beta == 0.0 {
        return WindowProfile { beta, taps: vec![1.0; len] };
    }
    let c = libm::floor((1.0 + beta / 2.0) * mp / 2.0);
    let g = |l: f64| {
        let x = libm::fabs(l - c) / mp - (1.0 - beta / 2.0) / 2.0;
        0.5 * (1.0 + libm::cos(2.0 * PI / beta * x))
    };
    let rise = beta / 2.0 * mp;
    let end = (1.0 + beta / 2.0) * mp;
    let taps = (0..len)
        .map(|i| {
            let l = i as f64;
            if l <= rise || (l >= mp && l <= end) {
                g(l)
            } else if l < mp {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    WindowProfile { beta, taps }
}
