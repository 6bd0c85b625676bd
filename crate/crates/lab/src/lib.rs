//! Experiment runner on top of `mmimo-core`.
//!
//! * [`experiments`]: the rate-versus-antennas sweep and the DoF contours,
//!   written as CSV with one self-describing row per sweep point.
//! * [`validation`]: named invariant checks with measured values.
//! * [`config`]: TOML experiment files.

pub mod config;
mod error;
pub mod experiments;
pub mod parallel;
pub mod validation;

pub use error::LabError;

/// Recorded in every output row.
pub const VERSION: &str = concat!("mmimo-lab ", env!("CARGO_PKG_VERSION"));
