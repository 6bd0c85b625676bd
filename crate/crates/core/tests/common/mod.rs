#![allow(dead_code)]

use mmimo_core::linalg::{c64, CMatrix};
use mmimo_core::model::{
    build_simple_profile, InversionMode, PilotStatistics, SimpleModelSpec, SystemConfig,
    TrainingSnr,
};
use mmimo_core::rng::{circular_gaussian, substream, Purpose};

/// Random `n x n` HPD-ish covariance `G G^H / rank` with trace close to `n`.
pub fn random_covariance(n: usize, rank: usize, seed: u64, index: u64) -> CMatrix {
    let mut rng = substream(seed, Purpose::Auxiliary, [index, n as u64, rank as u64, 0]);
    let g = CMatrix::from_fn(n, rank, |_, _| circular_gaussian(&mut rng));
    &g * g.adjoint() * c64(1.0 / rank as f64, 0.0)
}

pub fn simple_setup(
    antennas: usize,
    dof: usize,
    users: usize,
    cells: usize,
    alpha: f64,
    snr: f64,
) -> (SystemConfig, PilotStatistics) {
    let cfg = SystemConfig::new(cells, users, antennas, snr, TrainingSnr::Infinite, 7).unwrap();
    let spec = SimpleModelSpec::dft(antennas, dof, alpha).unwrap();
    let profile = build_simple_profile(&cfg, &spec).unwrap();
    let stats =
        PilotStatistics::new(&profile, 0, cfg.training_snr, InversionMode::PseudoInverse).unwrap();
    (cfg, stats)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
