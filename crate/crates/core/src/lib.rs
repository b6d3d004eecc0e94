//! Stochastic digital backpropagation (SDBP) for single-channel,
//! dual-polarization coherent fiber links.
//!
//! The crate covers the whole simulation chain:
//!
//! * [`signal`]: waveforms, root-raised-cosine shaping, matched filtering and
//!   spectral helpers.
//! * [`modem`]: dual-polarization QPSK / 16-QAM constellations, slicing, SER.
//! * [`channel`]: split-step Fourier fiber model, EDFAs, FBG dispersion
//!   compensation and the span-by-span link.
//! * [`sdbp`]: the particle backpropagation engine.
//! * [`stats`]: per-slot Gaussian moments and the memory-aware branch metric.
//! * [`detectors`]: DBP, symbol-by-symbol, decision-directed and Viterbi
//!   back ends, plus an exhaustive sequence oracle.
//! * [`experiment`]: seeded Monte Carlo sweeps, SER estimation and result
//!   persistence.
//!
//! Work is spread over particles, slots and Monte Carlo blocks with rayon when
//! the `parallel` feature is on (the default); [`exec::Exec`] selects the
//! strategy at run time and falls back to sequential code without the feature.

pub mod channel;
pub mod detectors;
mod error;
pub mod exec;
pub mod experiment;
mod linalg;
pub mod modem;
pub mod rng;
pub mod sdbp;
pub mod signal;
pub mod stats;
pub mod validate;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Converts a power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

/// Converts a power ratio in dB to a linear factor.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
