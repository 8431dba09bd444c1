//! Modem parameters and their derived quantities.

use crate::error::bail;
use crate::Result;

/// Pulse-shaping technique.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Technique {
    /// Circular pulse shaping (C-PS OTFS).
    Cps,
    /// Linear pulse shaping (L-PS OTFS).
    Lps,
    /// Orthogonal delay-Doppler multiplexing.
    Oddm,
}

impl Technique {
    pub const ALL: [Technique; 3] = [Technique::Cps, Technique::Lps, Technique::Oddm];

    pub fn is_linear(self) -> bool {
        !matches!(self, Technique::Cps)
    }

    pub fn name(self) -> &'static str {
        match self {
            Technique::Cps => "cps",
            Technique::Lps => "lps",
            Technique::Oddm => "oddm",
        }
    }
}

/// Out-of-band reduction applied along the delay axis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum GuardMode {
    #[default]
    None,
    /// Cyclic extension of the data grid before pulse shaping, then windowing.
    CeBeforePs,
    /// Cyclic extension of the shaped delay-time blocks, then windowing.
    CeAfterPs,
    /// Zero delay rows at both block edges.
    ZeroGuard,
}

impl GuardMode {
    pub fn name(self) -> &'static str {
        match self {
            GuardMode::None => "none",
            GuardMode::CeBeforePs => "ce_before_ps",
            GuardMode::CeAfterPs => "ce_after_ps",
            GuardMode::ZeroGuard => "zero_guard",
        }
    }

    pub fn is_ce(self) -> bool {
        matches!(self, GuardMode::CeBeforePs | GuardMode::CeAfterPs)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GuardConfig {
    pub mode: GuardMode,
    /// `L_CE` or `L_ZG`, in base-rate delay bins.
    pub length: usize,
    /// Window roll-off for the CE modes.
    pub beta: f64,
}

impl GuardConfig {
    pub fn none() -> Self {
        GuardConfig::default()
    }

    pub fn zero_guard(length: usize) -> Self {
        GuardConfig { mode: GuardMode::ZeroGuard, length, beta: 0.0 }
    }

    /// CE guard of `length` bins with the smallest roll-off giving
    /// `⌊βM⌋ = length`.
    pub fn cyclic_extension(mode: GuardMode, length: usize, m: usize) -> Self {
        GuardConfig { mode, length, beta: length as f64 / m as f64 }
    }

    /// Rows added at the head of the block (`⌈L/2⌉`).
    pub fn head(&self) -> usize {
        if self.mode == GuardMode::None {
            0
        } else {
            self.length.div_ceil(2)
        }
    }

    /// Rows added at the tail of the block (`⌊L/2⌋`).
    pub fn tail(&self) -> usize {
        if self.mode == GuardMode::None {
            0
        } else {
            self.length / 2
        }
    }

    pub fn extra(&self) -> usize {
        self.head() + self.tail()
    }
}

/// Complete modem parameter set.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModemConfig {
    /// Delay bins `M`.
    pub m: usize,
    /// Doppler bins `N`.
    pub n: usize,
    /// Oversampling factor `L_us` (also the decimation factor).
    pub l_us: usize,
    /// SRRC roll-off `α`.
    pub alpha: f64,
    /// Truncation of linear pulses to `±Q` zero crossings; `None` keeps the
    /// full `M'`-tap pulse. Circular shaping always uses the full pulse.
    pub q: Option<usize>,
    /// Cyclic prefix in base-rate samples.
    pub l_cp: usize,
    pub guard: GuardConfig,
    pub technique: Technique,
    /// Delay resolution `Δτ` in seconds (the base-rate sample period).
    pub delta_tau: f64,
}

impl ModemConfig {
    /// Parameter block of the reference experiments: `M=128, N=32, L_us=4,
    /// α=0.1, Q=12` at 1.92 MHz.
    pub fn reference() -> Self {
        ModemConfig {
            m: 128,
            n: 32,
            l_us: 4,
            alpha: 0.1,
            q: Some(12),
            l_cp: 16,
            guard: GuardConfig::none(),
            technique: Technique::Cps,
            delta_tau: 1.0 / 1.92e6,
        }
    }

    pub fn with_technique(mut self, t: Technique) -> Self {
        self.technique = t;
        self
    }

    pub fn with_guard(mut self, g: GuardConfig) -> Self {
        self.guard = g;
        self
    }

    pub fn m_prime(&self) -> usize {
        self.m * self.l_us
    }

    pub fn q_prime(&self) -> Option<usize> {
        self.q.map(|q| q * self.l_us)
    }

    pub fn l_cp_prime(&self) -> usize {
        self.l_cp * self.l_us
    }

    /// Delay rows of the block as transmitted, `M_CE = M + L` when any guard
    /// or extension is active.
    pub fn m_ce(&self) -> usize {
        self.m + self.guard.extra()
    }

    pub fn m_ce_prime(&self) -> usize {
        self.m_ce() * self.l_us
    }

    /// Rows of the grid that is pulse shaped (`M_d`): the extended grid for
    /// zero guards and CE-before-PS, the data grid otherwise.
    pub fn m_d(&self) -> usize {
        match self.guard.mode {
            GuardMode::ZeroGuard | GuardMode::CeBeforePs => self.m_ce(),
            GuardMode::None | GuardMode::CeAfterPs => self.m,
        }
    }

    /// Oversampled stride between consecutive delay blocks.
    pub fn stride(&self) -> usize {
        self.m_ce_prime()
    }

    /// `T = M·Δτ`.
    pub fn symbol_period(&self) -> f64 {
        self.m as f64 * self.delta_tau
    }

    /// `Δν = 1/(N·T)`.
    pub fn delta_nu(&self) -> f64 {
        1.0 / (self.n as f64 * self.symbol_period())
    }

    /// Oversampled rate `L_us/Δτ`.
    pub fn sample_rate(&self) -> f64 {
        self.l_us as f64 / self.delta_tau
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.l_us == 0 {
            bail!(Config, "M, N and L_us must all be at least 1");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            bail!(Config, "roll-off α = {} outside [0, 1]", self.alpha);
        }
        if self.alpha > 0.0 && self.l_us < 2 {
            bail!(Config, "roll-off α > 0 needs L_us ≥ 2 to hold the excess band");
        }
        if let Some(q) = self.q {
            if q == 0 || q > self.m_d() / 2 {
                bail!(Config, "truncation Q = {q} outside 1..={}", self.m_d() / 2);
            }
        }
        if !(self.delta_tau > 0.0) {
            bail!(Config, "Δτ must be positive");
        }
        let g = &self.guard;
        if g.mode.is_ce() {
            if self.technique != Technique::Cps {
                bail!(Config, "cyclic-extension windowing applies to C-PS only");
            }
            if g.length > 0 {
                if !(g.beta > 0.0 && g.beta <= 1.0) {
                    bail!(Config, "window roll-off β = {} outside (0, 1]", g.beta);
                }
                let want = libm::floor(g.beta * self.m as f64) as usize;
                if want != g.length {
                    bail!(Config, "CE length {} inconsistent with ⌊βM⌋ = {want}", g.length);
                }
            }
        }
        Ok(())
    }
}
