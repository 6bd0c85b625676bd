//! Multicell massive MIMO uplink with pilot contamination.
//!
//! The crate covers four layers:
//!
//! * [`model`]: system configuration, correlation profiles, channel draws and
//!   MMSE channel estimation from contaminated pilots.
//! * [`detect`]: matched-filter and MMSE receive filters, the exact
//!   conditional SINR of a linear detector and Monte Carlo ergodic rates.
//! * [`rmt`] and [`deteq`]: the random-matrix fixed point, its derivative
//!   system and the deterministic equivalents of the detector SINRs built on
//!   top of them.
//! * [`closedform`]: scalar formulas for the single-path-loss "angular bins"
//!   model, including the antenna/DoF planning conditions.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. IO, parallel sweeps and the command line live in `mmimo-lab`.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod closedform;
pub mod detect;
pub mod deteq;
mod error;
pub mod linalg;
pub mod model;
pub mod rmt;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, C64};
