//! Trial-level parallelism.
//!
//! Trials are pure functions of their index, and rayon's indexed `collect`
//! keeps index order, so the reduction sees the same sequence whatever the
//! thread count.

use mmimo_core::detect::{RateAccumulator, RateEstimate, RateSimulation, TrialRates};
use rayon::prelude::*;

use crate::LabError;

/// Size the global pool. Without an explicit count rayon picks one per core.
pub fn configure_threads(threads: Option<usize>) -> Result<(), LabError> {
    let Some(threads) = threads else {
        return Ok(());
    };
    if threads == 0 {
        return Err(LabError::config("--threads must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| LabError::config(format!("cannot size thread pool: {e}")))
}

/// Evaluate trials `0..trials`, returned in index order.
pub fn run_trials(simulation: &RateSimulation<'_>, trials: u64) -> Vec<TrialRates> {
    (0..trials)
        .into_par_iter()
        .map(|index| simulation.trial(index))
        .collect()
}

/// Parallel evaluation followed by the serial, index-ordered reduction.
pub fn ergodic_rates(simulation: &RateSimulation<'_>, trials: u64) -> (Vec<RateEstimate>, Vec<TrialRates>) {
    let results = run_trials(simulation, trials);
    let mut acc = RateAccumulator::new(simulation);
    for trial in &results {
        acc.push(trial);
    }
    (acc.finish(), results)
}
