//! Linear time-varying multipath channel at the oversampled rate, and AWGN.
//!
//! `r[κ'] = Σ_p g_p e^{j2πν_p κ'/f_s} s[κ' − d_p]`: every path has an integer
//! delay `d_p` in oversampled samples, a complex gain and one Doppler shift.
//! `κ'` is the absolute sample index of the stream (negative inside the CP
//! and the linear ramp-up), so the channel phase is tied to the frame grid.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dft::cis;
use crate::error::{bail, Error};
use crate::grid::SampleStream;
use crate::{CMatrix, Result, C64};

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 2.998e8;

/// 3GPP Extended Vehicular A: excess delays (ns) and relative powers (dB).
pub const EVA_DELAYS_NS: [f64; 9] = [0.0, 30.0, 150.0, 310.0, 370.0, 710.0, 1090.0, 1730.0, 2510.0];
pub const EVA_POWERS_DB: [f64; 9] = [0.0, -1.5, -1.4, -3.6, -0.6, -9.1, -7.0, -12.0, -16.9];

/// One tap of a custom power-delay profile.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProfileTap {
    pub delay_ns: f64,
    pub power_db: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ChannelProfile {
    /// Single path, unit gain, no delay, no Doppler.
    #[default]
    Ideal,
    Eva,
    Custom(Vec<ProfileTap>),
}

impl ChannelProfile {
    pub fn name(&self) -> &'static str {
        match self {
            ChannelProfile::Ideal => "ideal",
            ChannelProfile::Eva => "eva",
            ChannelProfile::Custom(_) => "custom",
        }
    }

    fn taps(&self) -> Vec<ProfileTap> {
        match self {
            ChannelProfile::Ideal => Vec::new(),
            ChannelProfile::Eva => EVA_DELAYS_NS
                .iter()
                .zip(EVA_POWERS_DB)
                .map(|(&delay_ns, power_db)| ProfileTap { delay_ns, power_db })
                .collect(),
            ChannelProfile::Custom(t) => t.clone(),
        }
    }
}

/// Per-tap Doppler model.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DopplerModel {
    /// One ray per tap, `ν = ν_max·cos θ`, `θ ~ U[0, 2π)`.
    #[default]
    SingleRay,
    /// Sum of `rays` equal-power rays per tap, each with its own angle and
    /// phase (Jakes-like).
    SumOfSinusoids { rays: usize },
    /// Every tap at exactly `+ν_max` (deterministic worst case).
    Maximum,
}

/// Physical parameters of a channel draw.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChannelSpec {
    pub profile: ChannelProfile,
    /// Relative velocity, km/h.
    pub velocity_kmh: f64,
    /// Carrier frequency, Hz.
    pub carrier_hz: f64,
    /// Base-rate bandwidth `BW = 1/Δτ`, Hz.
    pub bandwidth_hz: f64,
    pub doppler: DopplerModel,
}

impl ChannelSpec {
    /// EVA at 500 km/h and 5.9 GHz over 1.92 MHz.
    pub fn reference() -> Self {
        ChannelSpec {
            profile: ChannelProfile::Eva,
            velocity_kmh: 500.0,
            carrier_hz: 5.9e9,
            bandwidth_hz: 1.92e6,
            doppler: DopplerModel::SingleRay,
        }
    }

    pub fn ideal() -> Self {
        ChannelSpec { profile: ChannelProfile::Ideal, velocity_kmh: 0.0, ..Self::reference() }
    }

    /// `ν_max = v/c·f_c`.
    pub fn nu_max(&self) -> f64 {
        self.velocity_kmh / 3.6 / SPEED_OF_LIGHT * self.carrier_hz
    }

    /// Whether two draws from this spec can differ.
    pub fn is_random(&self) -> bool {
        !matches!(self.profile, ChannelProfile::Ideal)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChannelPath {
    /// Delay in oversampled samples.
    pub delay: usize,
    pub gain: C64,
    /// Doppler shift, Hz.
    pub doppler_hz: f64,
}

/// One channel draw: the path list plus what produced it.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChannelRealization {
    pub paths: Vec<ChannelPath>,
    /// Oversampled rate `L_us·BW`, Hz.
    pub sample_rate: f64,
    pub l_us: usize,
    pub seed: u64,
    pub profile: String,
}

impl ChannelRealization {
    /// The pass-through channel.
    pub fn ideal(sample_rate: f64, l_us: usize) -> Self {
        ChannelRealization {
            paths: alloc::vec![ChannelPath { delay: 0, gain: C64::new(1.0, 0.0), doppler_hz: 0.0 }],
            sample_rate,
            l_us,
            seed: 0,
            profile: String::from("ideal"),
        }
    }

    /// Largest path delay in oversampled samples.
    pub fn max_delay(&self) -> usize {
        self.paths.iter().map(|p| p.delay).max().unwrap_or(0)
    }

    /// Base-rate delay spread `L_ch` (taps `0..L_ch·L_us` cover every path).
    pub fn l_ch(&self) -> usize {
        self.max_delay() / self.l_us + 1
    }

    /// `h[κ', i]`.
    pub fn h(&self, kappa: isize, i: usize) -> C64 {
        self.paths
            .iter()
            .filter(|p| p.delay == i)
            .map(|p| p.gain * self.rotation(p, kappa))
            .sum()
    }

    fn rotation(&self, p: &ChannelPath, kappa: isize) -> C64 {
        if p.doppler_hz == 0.0 {
            C64::new(1.0, 0.0)
        } else {
            cis(2.0 * PI * p.doppler_hz * kappa as f64 / self.sample_rate)
        }
    }

    /// `h[κ', i]` over `κ' ∈ start..start+len` (rows) and
    /// `i ∈ 0..L_ch·L_us` (columns).
    pub fn sampled(&self, start: isize, len: usize) -> CMatrix {
        let taps = self.l_ch() * self.l_us;
        CMatrix::from_fn(len, taps, |r, i| self.h(start + r as isize, i))
    }

    pub fn total_power(&self) -> f64 {
        self.paths.iter().map(|p| p.gain.norm_sqr()).sum()
    }
}

/// Draws a realization; deterministic in `seed`.
pub fn generate_channel(spec: &ChannelSpec, l_us: usize, seed: u64) -> Result<ChannelRealization> {
    if !(spec.velocity_kmh >= 0.0) || !(spec.bandwidth_hz > 0.0) || l_us == 0 {
        bail!(Config, "channel needs v ≥ 0, BW > 0 and L_us ≥ 1");
    }
    let fs = spec.bandwidth_hz * l_us as f64;
    if spec.profile == ChannelProfile::Ideal {
        let mut ch = ChannelRealization::ideal(fs, l_us);
        ch.seed = seed;
        return Ok(ch);
    }
    let taps = spec.profile.taps();
    if taps.is_empty() {
        return Err(Error::Config(String::from("custom profile without taps")));
    }
    // Quantize to the oversampled grid, merging taps that land together.
    let mut merged: Vec<(usize, f64)> = Vec::new();
    for t in &taps {
        if !(t.delay_ns >= 0.0) {
            bail!(Config, "negative tap delay {} ns", t.delay_ns);
        }
        let d = libm::round(t.delay_ns * 1e-9 * fs) as usize;
        let p = libm::pow(10.0, t.power_db / 10.0);
        match merged.iter_mut().find(|(md, _)| *md == d) {
            Some(e) => e.1 += p,
            None => merged.push((d, p)),
        }
    }
    let total: f64 = merged.iter().map(|e| e.1).sum();
    let nu_max = spec.nu_max();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut paths = Vec::new();
    for &(delay, p) in &merged {
        let rays = match spec.doppler {
            DopplerModel::SumOfSinusoids { rays } => rays.max(1),
            _ => 1,
        };
        let share = p / total / rays as f64;
        for _ in 0..rays {
            let gain = complex_gaussian(&mut rng) * libm::sqrt(share);
            let doppler_hz = match spec.doppler {
                DopplerModel::Maximum => nu_max,
                _ => nu_max * libm::cos(2.0 * PI * rng.random::<f64>()),
            };
            paths.push(ChannelPath { delay, gain, doppler_hz });
        }
    }
    Ok(ChannelRealization { paths, sample_rate: fs, l_us, seed, profile: String::from(spec.profile.name()) })
}

/// Unit-variance circularly symmetric complex Gaussian.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * core::f64::consts::FRAC_1_SQRT_2
}

/// Time-varying convolution over the stream's own index range; samples
/// before the stream start read as zero and the tail past its end is
/// dropped. `cp` is the prefix length in oversampled samples, which must
/// cover the largest path delay.
pub fn apply_channel(ch: &ChannelRealization, stream: &SampleStream, cp: usize) -> Result<SampleStream> {
    let spread = ch.max_delay();
    if spread > cp {
        return Err(Error::CpTooShort { spread, cp });
    }
    let len = stream.len();
    let mut out = alloc::vec![C64::new(0.0, 0.0); len];
    for p in &ch.paths {
        if p.delay >= len {
            continue;
        }
        let step = cis(2.0 * PI * p.doppler_hz / ch.sample_rate);
        let first = stream.start_index + p.delay as isize;
        let mut rot = p.gain * ch.rotation(p, first);
        for (i, o) in out.iter_mut().enumerate().skip(p.delay) {
            *o += rot * stream.samples[i - p.delay];
            rot *= step;
            // Re-anchor periodically so the recursion does not drift.
            if (i + 1) % 4096 == 0 {
                rot = p.gain * ch.rotation(p, stream.start_index + i as isize + 1);
            }
        }
    }
    Ok(SampleStream { samples: out, start_index: stream.start_index, rate_factor: stream.rate_factor })
}

/// Complex AWGN of variance `σ²_η` per sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    pub sigma2: f64,
}

impl NoiseModel {
    /// `σ²_η = E_b/(E_b/N_0)` with `E_b = E_core/(data symbols · bits)`.
    ///
    /// `E_core` is the transmitted energy without the CP; at unit sample
    /// spacing the per-sample noise variance equals `N_0`. Oversampling needs
    /// no separate correction: the matched filter has unit energy, so the
    /// noise reaching each symbol is `σ²_η` whatever `L_us` is, while
    /// the energy spent on guards or extensions counts against `E_b`.
    pub fn from_ebn0(core_energy: f64, data_symbols: usize, bits_per_symbol: usize, ebn0_db: f64) -> Self {
        if ebn0_db == f64::INFINITY {
            return NoiseModel { sigma2: 0.0 };
        }
        let eb = core_energy / (data_symbols * bits_per_symbol) as f64;
        NoiseModel { sigma2: eb / libm::pow(10.0, ebn0_db / 10.0) }
    }
}

pub fn add_awgn<R: Rng + ?Sized>(stream: &SampleStream, noise: NoiseModel, rng: &mut R) -> SampleStream {
    let mut out = stream.clone();
    if noise.sigma2 > 0.0 {
        let s = libm::sqrt(noise.sigma2);
        for v in &mut out.samples {
            *v += complex_gaussian(rng) * s;
        }
    }
    out
}

/// [`add_awgn`] with a private generator seeded by `seed`.
pub fn add_awgn_seeded(stream: &SampleStream, noise: NoiseModel, seed: u64) -> SampleStream {
    add_awgn(stream, noise, &mut ChaCha8Rng::seed_from_u64(seed))
}
