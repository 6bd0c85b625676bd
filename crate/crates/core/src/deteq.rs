//! Deterministic equivalents of the matched-filter and MMSE SINRs.
//!
//! Both are evaluated from the estimator statistics of one base station
//! ([`PilotStatistics`]); the MMSE version additionally solves the
//! resolvent fixed point with `D = I`, `S = Z_j / N`, `R_k = Phi_jjk` at
//! `rho = lambda`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use num_traits::Float;

use crate::closedform::Saturation;
use crate::linalg::{c64, identity, trace_product, CMatrix, C64};
use crate::model::PilotStatistics;
use crate::rmt::{
    solve_fixed_point, DerivativeSystem, FixedPointOptions, FixedPointProblem,
};
use crate::Result;

/// Matched-filter deterministic equivalent of one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfTerms {
    pub gamma: f64,
    /// `(1/N) tr Phi_jjm`; the numerator is its square.
    pub signal: f64,
    /// `tr Phi_jjm / (rho N^2)`.
    pub noise: f64,
    /// `(1/N) sum_{l,k} (1/N) tr R_jlk Phi_jjm`.
    pub interference: f64,
    /// `sum_{l != j} |(1/N) tr Phi_jlm|^2`.
    pub contamination: f64,
    pub degenerate: bool,
}

impl MfTerms {
    pub fn rate(&self) -> f64 {
        de_rate(self.gamma)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfDeterministicEquivalent {
    pub cell: usize,
    pub users: Vec<MfTerms>,
}

fn ntrace(a: &CMatrix, b: &CMatrix) -> C64 {
    trace_product(a, b) / c64(a.nrows() as f64, 0.0)
}

/// Matched-filter SINR deterministic equivalent for every user of the cell.
pub fn de_sinr_mf(stats: &PilotStatistics, snr: f64) -> MfDeterministicEquivalent {
    let (j, cells, users) = (stats.cell(), stats.cells(), stats.users());
    let n = stats.antennas() as f64;
    let mut cache: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let users = (0..users)
        .map(|m| {
            let phi = stats.phi(j, m);
            let signal = phi.trace().re / n;
            if phi.norm() == 0.0 {
                return MfTerms {
                    gamma: 0.0,
                    signal: 0.0,
                    noise: 0.0,
                    interference: 0.0,
                    contamination: 0.0,
                    degenerate: true,
                };
            }
            let noise = phi.trace().re / (snr * n * n);
            let mut interference = 0.0;
            for l in 0..cells {
                for k in 0..users_of(stats) {
                    let key = (stats.correlation_id(l, k), stats.phi_id(j, m));
                    interference += *cache
                        .entry(key)
                        .or_insert_with(|| ntrace(stats.correlation(l, k), phi).re);
                }
            }
            interference /= n;
            let contamination: f64 = (0..cells)
                .filter(|&l| l != j)
                .map(|l| (stats.phi(l, m).trace() / c64(n, 0.0)).norm_sqr())
                .sum();
            let denominator = noise + interference + contamination;
            MfTerms {
                gamma: signal * signal / denominator,
                signal,
                noise,
                interference,
                contamination,
                degenerate: false,
            }
        })
        .collect();
    MfDeterministicEquivalent { cell: j, users }
}

fn users_of(stats: &PilotStatistics) -> usize {
    stats.users()
}

/// MMSE deterministic equivalent of one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmseTerms {
    pub gamma: f64,
    /// `delta_jm`; the numerator is its square.
    pub delta: f64,
    /// `tr(Phi_jjm Tbar'_j) / (rho N^2)`.
    pub noise: f64,
    /// `(1/N) sum_{l,k} mu_jlkm`.
    pub interference: f64,
    /// `sum_{l != j} |theta_jlm|^2`.
    pub contamination: f64,
}

impl MmseTerms {
    pub fn rate(&self) -> f64 {
        de_rate(self.gamma)
    }
}

/// Quantities that depend on the user `m` through `Theta = Phi_jjm`.
#[derive(Debug, Clone, PartialEq)]
pub struct MmseUserDetail {
    /// `T'_jm`.
    pub t_prime: CMatrix,
    /// `delta'_jm`, one entry per user `k`.
    pub delta_prime: Vec<f64>,
    /// `theta'_jlkm`, indexed `l * K + k`.
    pub theta_prime: Vec<C64>,
    /// `mu_jlkm`, indexed `l * K + k`.
    pub mu: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmseDeterministicEquivalent {
    pub cell: usize,
    pub lambda: f64,
    /// `T_j = T(lambda)`.
    pub t: CMatrix,
    /// `delta_j`.
    pub delta: Vec<f64>,
    /// `Tbar'_j`, the derivative with `Theta = I`.
    pub t_bar_prime: CMatrix,
    /// `theta_jlk = (1/N) tr Phi_jlk T_j`, indexed `l * K + k`.
    pub theta: Vec<C64>,
    pub users: Vec<MmseTerms>,
    /// Distinct per-user details; `detail_of[m]` points into this list.
    pub details: Vec<MmseUserDetail>,
    pub detail_of: Vec<usize>,
}

impl MmseDeterministicEquivalent {
    pub fn detail(&self, m: usize) -> &MmseUserDetail {
        &self.details[self.detail_of[m]]
    }
}

/// The fixed-point problem behind the MMSE equivalent of cell `j`.
pub fn mmse_fixed_point_problem(stats: &PilotStatistics, lambda: f64) -> Result<FixedPointProblem> {
    let n = stats.antennas();
    let covariances = (0..stats.users())
        .map(|k| stats.phi(stats.cell(), k).clone())
        .collect();
    FixedPointProblem::new(
        identity(n),
        stats.interference() / c64(n as f64, 0.0),
        covariances,
        lambda,
    )
}

/// MMSE SINR deterministic equivalent for every user of the cell.
pub fn de_sinr_mmse(
    stats: &PilotStatistics,
    snr: f64,
    lambda: f64,
    options: &FixedPointOptions,
) -> Result<MmseDeterministicEquivalent> {
    let (j, cells, users) = (stats.cell(), stats.cells(), stats.users());
    let n = stats.antennas() as f64;
    let problem = mmse_fixed_point_problem(stats, lambda)?;
    let solution = solve_fixed_point(&problem, options)?;
    let system = DerivativeSystem::new(&problem, &solution)?;
    let t_bar_prime = system.solve(&identity(stats.antennas()))?.t_prime;
    let t = &solution.t;
    let delta = &solution.delta;

    let mut phi_t: BTreeMap<usize, C64> = BTreeMap::new();
    let theta: Vec<C64> = (0..cells)
        .flat_map(|l| (0..users).map(move |k| (l, k)))
        .map(|(l, k)| {
            *phi_t
                .entry(stats.phi_id(l, k))
                .or_insert_with(|| ntrace(stats.phi(l, k), t))
        })
        .collect();

    let mut signatures: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let mut details: Vec<MmseUserDetail> = Vec::new();
    let mut detail_of = Vec::with_capacity(users);
    let mut terms = Vec::with_capacity(users);
    for m in 0..users {
        let signature: Vec<usize> = (0..cells).map(|l| stats.phi_id(l, m)).collect();
        let slot = match signatures.get(&signature) {
            Some(&slot) => slot,
            None => {
                let derivative = system.solve(stats.phi(j, m))?;
                let t_prime = derivative.t_prime;
                let delta_prime = derivative.delta_prime;
                let mut phi_cache: BTreeMap<usize, C64> = BTreeMap::new();
                let mut corr_cache: BTreeMap<usize, f64> = BTreeMap::new();
                let mut theta_prime = Vec::with_capacity(cells * users);
                let mut mu = Vec::with_capacity(cells * users);
                for l in 0..cells {
                    for k in 0..users {
                        let tp = *phi_cache
                            .entry(stats.phi_id(l, k))
                            .or_insert_with(|| ntrace(stats.phi(l, k), &t_prime));
                        let rt = *corr_cache
                            .entry(stats.correlation_id(l, k))
                            .or_insert_with(|| ntrace(stats.correlation(l, k), &t_prime).re);
                        let th = theta[l * users + k];
                        let one_plus = 1.0 + delta[k];
                        let correction = 2.0 * (th.conj() * tp).re * one_plus
                            - th.norm_sqr() * delta_prime[k];
                        mu.push(rt - correction / (one_plus * one_plus));
                        theta_prime.push(tp);
                    }
                }
                details.push(MmseUserDetail {
                    t_prime,
                    delta_prime,
                    theta_prime,
                    mu,
                });
                signatures.insert(signature, details.len() - 1);
                details.len() - 1
            }
        };
        detail_of.push(slot);
        let detail = &details[slot];
        let noise = trace_product(stats.phi(j, m), &t_bar_prime).re / (snr * n * n);
        let interference = detail.mu.iter().sum::<f64>() / n;
        let contamination: f64 = (0..cells)
            .filter(|&l| l != j)
            .map(|l| theta[l * users + m].norm_sqr())
            .sum();
        let numerator = delta[m] * delta[m];
        let denominator = noise + interference + contamination;
        let gamma = if numerator == 0.0 { 0.0 } else { numerator / denominator };
        terms.push(MmseTerms {
            gamma,
            delta: delta[m],
            noise,
            interference,
            contamination,
        });
    }

    Ok(MmseDeterministicEquivalent {
        cell: j,
        lambda,
        t: solution.t.clone(),
        delta: solution.delta.clone(),
        t_bar_prime,
        theta,
        users: terms,
        details,
        detail_of,
    })
}

/// `log2(1 + gamma)`.
pub fn de_rate(gamma: f64) -> f64 {
    Float::log2(1.0 + gamma)
}

/// Finite-`N` stand-in for the infinite-antenna limit of both detectors.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticLimit {
    pub cell: usize,
    /// `beta_jlk = (1/N) tr Phi_jlk`, indexed `l * K + k`.
    pub beta: Vec<C64>,
    pub users: Vec<Saturation>,
}

/// `beta_jjm^2 / sum_{l != j} |beta_jlm|^2` for every user.
pub fn asymptotic_sir(stats: &PilotStatistics) -> AsymptoticLimit {
    let (j, cells, users) = (stats.cell(), stats.cells(), stats.users());
    let n = c64(stats.antennas() as f64, 0.0);
    let beta: Vec<C64> = (0..cells)
        .flat_map(|l| (0..users).map(move |k| (l, k)))
        .map(|(l, k)| stats.phi(l, k).trace() / n)
        .collect();
    let limits = (0..users)
        .map(|m| {
            let own = beta[j * users + m].re;
            let leak: f64 = (0..cells)
                .filter(|&l| l != j)
                .map(|l| beta[l * users + m].norm_sqr())
                .sum();
            if leak == 0.0 {
                Saturation::Unlimited
            } else {
                Saturation::limited(own * own / leak)
            }
        })
        .collect();
    AsymptoticLimit {
        cell: j,
        beta,
        users: limits,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        build_simple_profile, CorrelationProfile, InversionMode, SimpleModelSpec, SystemConfig,
        TrainingSnr,
    };

    fn simple_stats(n: usize, p: usize, users: usize, cells: usize, alpha: f64) -> PilotStatistics {
        let cfg = SystemConfig::new(cells, users, n, 1.0, TrainingSnr::Infinite, 0).unwrap();
        let profile = build_simple_profile(&cfg, &SimpleModelSpec::dft(n, p, alpha).unwrap()).unwrap();
        PilotStatistics::new(&profile, 0, cfg.training_snr, InversionMode::default()).unwrap()
    }

    #[test]
    fn rate_values() {
        assert_eq!(de_rate(0.0), 0.0);
        assert!((de_rate(1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_snr_limit() {
        let stats = simple_stats(8, 8, 2, 2, 0.5);
        let de = de_sinr_mf(&stats, 1e-12);
        assert!(de.users[0].gamma < 1e-9);
    }

    #[test]
    fn single_cell_mrc_limit() {
        let n = 200;
        let cfg = SystemConfig::new(1, 1, n, 0.5, TrainingSnr::Infinite, 0).unwrap();
        let profile = CorrelationProfile::identity(1, 1, n).unwrap();
        let stats = PilotStatistics::new(&profile, 0, cfg.training_snr, InversionMode::Strict).unwrap();
        let de = de_sinr_mf(&stats, cfg.snr);
        // gamma = 1 / (1/(rho N) + 1/N) -> rho N as K/N -> 0.
        let exact = 1.0 / (1.0 / (cfg.snr * n as f64) + 1.0 / n as f64);
        assert!((de.users[0].gamma - exact).abs() < 1e-9 * exact);
        assert!(matches!(asymptotic_sir(&stats).users[0], Saturation::Unlimited));
    }

    #[test]
    fn asymptotic_sir_simple_model() {
        let stats = simple_stats(12, 4, 2, 4, 0.1);
        let limit = asymptotic_sir(&stats);
        match limit.users[1] {
            Saturation::Limited { gamma, .. } => assert!((gamma - 100.0 / 3.0).abs() < 1e-9),
            Saturation::Unlimited => panic!("contaminated profile"),
        }
        let symmetric = asymptotic_sir(&simple_stats(6, 3, 1, 2, 1.0));
        match symmetric.users[0] {
            Saturation::Limited { gamma, .. } => assert!((gamma - 1.0).abs() < 1e-12),
            Saturation::Unlimited => panic!("contaminated profile"),
        }
    }

    #[test]
    fn mmse_is_cached_per_signature() {
        let stats = simple_stats(10, 5, 3, 3, 0.3);
        let de = de_sinr_mmse(&stats, 1.0, 0.1, &FixedPointOptions::default()).unwrap();
        assert_eq!(de.details.len(), 1);
        assert!(de.users.windows(2).all(|w| w[0] == w[1]));
    }
}
