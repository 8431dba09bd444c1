//! Delay-Doppler pulse-shaping modems.
//!
//! Circularly and linearly pulse-shaped OTFS (C-PS / L-PS) and ODDM share one
//! transmit/receive skeleton: data on an `M×N` delay-Doppler grid, an IDFT
//! across Doppler, pulse shaping along delay at `L_us`-fold oversampling, and
//! block serialization. This crate holds the reference (direct) modems, the
//! FFT-based fast structures with complex-multiplication accounting, an LTV
//! channel simulator, the end-to-end effective-channel matrices with MMSE
//! detection, and the measurement primitives (PSD, PAPR, BER).
//!
//! The crate is `no_std` (it needs `alloc`); file formats, configuration
//! files and the command-line driver live in `ddpulse-tools`.

#![no_std]

extern crate alloc;

pub mod channel;
pub mod config;
pub mod dft;
pub mod effective;
mod error;
pub mod fast;
pub mod grid;
mod linalg;
pub mod metrics;
pub mod modem;
pub mod pulse;
pub mod qam;
pub mod transforms;

pub use config::{GuardConfig, GuardMode, ModemConfig, Technique};
pub use error::{Error, Result};
pub use grid::{DelayDopplerGrid, DelayTimeGrid, SampleStream, TimeFrequencyGrid};

pub type C64 = num_complex::Complex<f64>;

/// Dense complex matrix, column-major.
pub type CMatrix = nalgebra::DMatrix<C64>;
