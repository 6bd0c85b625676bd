//! Linear detection with imperfect CSI.
//!
//! The SINR of a filter `r_jm` is the ratio of the useful power
//! `|r^H hhat_jjm|^2` to `r^H B r`, where `B` is the expected
//! interference-plus-noise covariance given the pilot observations of cell
//! `j`:
//!
//! ```text
//! B = (1/rho) I + sum_{k != m} hhat_jjk hhat_jjk^H + sum_k C_jjk
//!     + sum_{l != j} sum_k (m_jlk m_jlk^H + C_jlk)
//! ```
//!
//! The other-cell means `m_jlk` are what carries pilot contamination.

use alloc::vec::Vec;

use num_traits::Float;

use crate::linalg::{c64, inverse_hpd, CMatrix, CVector};
use crate::model::{
    cell_pilot_observation, draw_cell_channels, CellEstimate, CorrelationProfile, InversionMode,
    PilotStatistics, SystemConfig,
};
use crate::stats::{Estimate, RunningMean};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Detector {
    MatchedFilter,
    /// `(Hhat Hhat^H + Z + N lambda I)^{-1} hhat`.
    Mmse { lambda: f64 },
}

impl Detector {
    /// MMSE with `lambda = 1/(rho N)`.
    pub fn mmse_default(config: &SystemConfig) -> Self {
        Detector::Mmse {
            lambda: config.default_lambda(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Detector::MatchedFilter => "mf",
            Detector::Mmse { .. } => "mmse",
        }
    }
}

/// `Z_j`, the covariance of everything the MMSE filter treats as noise
/// besides the own-cell estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceMatrix {
    pub cell: usize,
    pub matrix: CMatrix,
}

pub fn interference_matrix(stats: &PilotStatistics) -> InterferenceMatrix {
    InterferenceMatrix {
        cell: stats.cell(),
        matrix: stats.interference().clone(),
    }
}

/// Receive filters of one cell; column `m` is `r_jm`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFilter {
    pub cell: usize,
    pub detector: Detector,
    pub vectors: CMatrix,
}

impl LinearFilter {
    pub fn vector(&self, m: usize) -> CVector {
        self.vectors.column(m).into_owned()
    }
}

pub fn matched_filter(estimate: &CellEstimate) -> LinearFilter {
    LinearFilter {
        cell: estimate.cell,
        detector: Detector::MatchedFilter,
        vectors: estimate.hhat().clone(),
    }
}

/// MMSE filters for repeated estimates of the same cell.
///
/// `Z_j + N lambda I` is inverted once; each estimate then costs a rank-`K`
/// update (Woodbury).
#[derive(Debug, Clone)]
pub struct MmseFilterBuilder {
    cell: usize,
    lambda: f64,
    base_inverse: CMatrix,
}

impl MmseFilterBuilder {
    pub fn new(z: &InterferenceMatrix, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Config("MMSE regularizer must be positive"));
        }
        let n = z.matrix.nrows();
        let mut base = z.matrix.clone();
        for i in 0..n {
            base[(i, i)] += c64(n as f64 * lambda, 0.0);
        }
        let base_inverse =
            inverse_hpd(&base).ok_or(Error::NotPositiveDefinite("Z + N lambda I"))?;
        Ok(Self {
            cell: z.cell,
            lambda,
            base_inverse,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn build(&self, estimate: &CellEstimate) -> LinearFilter {
        let hhat = estimate.hhat();
        let users = hhat.ncols();
        let x = &self.base_inverse * hhat;
        let mut core = hhat.adjoint() * &x;
        for i in 0..users {
            core[(i, i)] += c64(1.0, 0.0);
        }
        // I + Hhat^H M0^{-1} Hhat is Hermitian positive definite.
        let vectors = match inverse_hpd(&core) {
            Some(inv) => x * inv,
            None => x * core.try_inverse().unwrap_or_else(|| CMatrix::zeros(users, users)),
        };
        LinearFilter {
            cell: self.cell,
            detector: Detector::Mmse {
                lambda: self.lambda,
            },
            vectors,
        }
    }
}

pub fn mmse_filter(
    estimate: &CellEstimate,
    z: &InterferenceMatrix,
    lambda: f64,
) -> Result<LinearFilter> {
    Ok(MmseFilterBuilder::new(z, lambda)?.build(estimate))
}

/// SINR of one user with its denominator split by origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserSinr {
    pub sinr: f64,
    /// `|r^H hhat_jjm|^2`.
    pub signal: f64,
    /// `||r||^2 / rho`.
    pub noise: f64,
    /// `r^H (sum_k C_jjk) r`.
    pub estimation_error: f64,
    /// `sum_{k != m} |r^H hhat_jjk|^2`.
    pub intra_cell: f64,
    /// Other-cell users on other pilots plus the conditional covariance of
    /// all other-cell channels.
    pub inter_cell: f64,
    /// `sum_{l != j} |r^H m_jlm|^2`.
    pub pilot_contamination: f64,
    /// Zero filter; `sinr` is reported as 0.
    pub degenerate: bool,
}

impl UserSinr {
    pub fn denominator(&self) -> f64 {
        self.noise + self.estimation_error + self.intra_cell + self.inter_cell + self.pilot_contamination
    }

    pub fn rate(&self) -> f64 {
        Float::log2(1.0 + self.sinr)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinrReport {
    pub cell: usize,
    pub detector: Detector,
    pub users: Vec<UserSinr>,
}

impl SinrReport {
    pub fn rates(&self) -> impl Iterator<Item = f64> + '_ {
        self.users.iter().map(UserSinr::rate)
    }
}

fn column_quadratic_forms(matrix: &CMatrix, vectors: &CMatrix) -> Vec<f64> {
    let product = matrix * vectors;
    (0..vectors.ncols())
        .map(|m| vectors.column(m).dotc(&product.column(m)).re)
        .collect()
}

/// Conditional SINR of every user of the filter's cell given its pilot
/// observations.
pub fn conditional_sinr(
    filter: &LinearFilter,
    estimate: &CellEstimate,
    stats: &PilotStatistics,
    snr: f64,
) -> SinrReport {
    let r = &filter.vectors;
    let hhat = estimate.hhat();
    let users = hhat.ncols();
    let cell = estimate.cell;

    let own = r.adjoint() * hhat;
    let others: Vec<CMatrix> = (0..estimate.means.len())
        .filter(|&l| l != cell)
        .map(|l| r.adjoint() * &estimate.means[l])
        .collect();
    let error_terms = column_quadratic_forms(stats.estimation_error(), r);
    let cross_terms = column_quadratic_forms(stats.intercell_error(), r);

    let users = (0..users)
        .map(|m| {
            let norm2 = r.column(m).norm_squared();
            let signal = own[(m, m)].norm_sqr();
            let intra_cell: f64 = (0..own.ncols())
                .filter(|&k| k != m)
                .map(|k| own[(m, k)].norm_sqr())
                .sum();
            let pilot_contamination: f64 = others.iter().map(|g| g[(m, m)].norm_sqr()).sum();
            let other_users: f64 = others
                .iter()
                .map(|g| {
                    (0..g.ncols())
                        .filter(|&k| k != m)
                        .map(|k| g[(m, k)].norm_sqr())
                        .sum::<f64>()
                })
                .sum();
            let mut terms = UserSinr {
                sinr: 0.0,
                signal,
                noise: norm2 / snr,
                estimation_error: error_terms[m].max(0.0),
                intra_cell,
                inter_cell: cross_terms[m].max(0.0) + other_users,
                pilot_contamination,
                degenerate: norm2 == 0.0,
            };
            let denominator = terms.denominator();
            if !terms.degenerate && denominator > 0.0 {
                terms.sinr = signal / denominator;
            }
            terms
        })
        .collect();
    SinrReport {
        cell,
        detector: filter.detector,
        users,
    }
}

/// Rates of one Monte Carlo trial: `rates[d][s]` for detector `d` and user
/// slot `s` (see [`RateSimulation::users`]).
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRates {
    pub index: u64,
    pub rates: Vec<Vec<f64>>,
}

impl TrialRates {
    /// Average over user slots.
    pub fn mean(&self, detector: usize) -> f64 {
        let r = &self.rates[detector];
        r.iter().sum::<f64>() / r.len() as f64
    }
}

struct CellContext {
    stats: PilotStatistics,
    builders: Vec<Option<MmseFilterBuilder>>,
}

/// Everything a Monte Carlo trial needs that does not depend on the draw.
///
/// [`RateSimulation::trial`] is a pure function of the trial index, so trials
/// may run in any order or in parallel.
pub struct RateSimulation<'a> {
    profile: &'a CorrelationProfile,
    config: SystemConfig,
    detectors: Vec<Detector>,
    contexts: Vec<CellContext>,
}

impl<'a> RateSimulation<'a> {
    pub fn new(
        profile: &'a CorrelationProfile,
        config: &SystemConfig,
        detectors: &[Detector],
        cells: &[usize],
    ) -> Result<Self> {
        config.validate()?;
        profile.check_config(config)?;
        if detectors.is_empty() {
            return Err(Error::Config("at least one detector is required"));
        }
        if cells.is_empty() {
            return Err(Error::Config("at least one cell is required"));
        }
        let mut contexts = Vec::with_capacity(cells.len());
        for &cell in cells {
            let stats =
                PilotStatistics::new(profile, cell, config.training_snr, InversionMode::default())?;
            let z = interference_matrix(&stats);
            let builders = detectors
                .iter()
                .map(|d| match d {
                    Detector::MatchedFilter => Ok(None),
                    Detector::Mmse { lambda } => MmseFilterBuilder::new(&z, *lambda).map(Some),
                })
                .collect::<Result<Vec<_>>>()?;
            contexts.push(CellContext { stats, builders });
        }
        Ok(Self {
            profile,
            config: config.clone(),
            detectors: detectors.to_vec(),
            contexts,
        })
    }

    pub fn detectors(&self) -> &[Detector] {
        &self.detectors
    }

    pub fn statistics(&self, slot: usize) -> &PilotStatistics {
        &self.contexts[slot].stats
    }

    /// `(cell, user)` for every user slot, in reporting order.
    pub fn users(&self) -> Vec<(usize, usize)> {
        self.contexts
            .iter()
            .flat_map(|c| (0..self.config.users).map(move |m| (c.stats.cell(), m)))
            .collect()
    }

    /// SINR reports of one trial, `[cell slot][detector]`.
    pub fn trial_reports(&self, index: u64) -> Vec<Vec<SinrReport>> {
        let seed = self.config.seed;
        self.contexts
            .iter()
            .map(|context| {
                let cell = context.stats.cell();
                let channels = draw_cell_channels(self.profile, cell, seed, index);
                let y = cell_pilot_observation(&channels, self.config.training_snr, seed, index);
                let estimate = context.stats.estimate(&y);
                self.detectors
                    .iter()
                    .zip(&context.builders)
                    .map(|(detector, builder)| {
                        let filter = match (detector, builder) {
                            (Detector::Mmse { .. }, Some(b)) => b.build(&estimate),
                            _ => matched_filter(&estimate),
                        };
                        conditional_sinr(&filter, &estimate, &context.stats, self.config.snr)
                    })
                    .collect()
            })
            .collect()
    }

    pub fn trial(&self, index: u64) -> TrialRates {
        let reports = self.trial_reports(index);
        let rates = (0..self.detectors.len())
            .map(|d| {
                reports
                    .iter()
                    .flat_map(|per_cell| per_cell[d].rates())
                    .collect()
            })
            .collect();
        TrialRates { index, rates }
    }
}

/// Ergodic rate of one detector: per-user estimates and the estimate of the
/// per-trial average over all user slots.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    pub detector: Detector,
    pub users: Vec<(usize, usize)>,
    pub per_user: Vec<Estimate>,
    pub pooled: Estimate,
}

/// Order-sensitive reduction of [`TrialRates`]. Push trials in index order
/// for reproducible results.
#[derive(Debug, Clone)]
pub struct RateAccumulator {
    detectors: Vec<Detector>,
    users: Vec<(usize, usize)>,
    per_user: Vec<Vec<RunningMean>>,
    pooled: Vec<RunningMean>,
}

impl RateAccumulator {
    pub fn new(simulation: &RateSimulation<'_>) -> Self {
        let users = simulation.users();
        let detectors = simulation.detectors().to_vec();
        Self {
            per_user: alloc::vec![alloc::vec![RunningMean::new(); users.len()]; detectors.len()],
            pooled: alloc::vec![RunningMean::new(); detectors.len()],
            detectors,
            users,
        }
    }

    pub fn push(&mut self, trial: &TrialRates) {
        for (d, rates) in trial.rates.iter().enumerate() {
            for (acc, &rate) in self.per_user[d].iter_mut().zip(rates) {
                acc.push(rate);
            }
            self.pooled[d].push(trial.mean(d));
        }
    }

    pub fn finish(self) -> Vec<RateEstimate> {
        let users = self.users;
        self.detectors
            .into_iter()
            .zip(self.per_user)
            .zip(self.pooled)
            .map(|((detector, per_user), pooled)| RateEstimate {
                detector,
                users: users.clone(),
                per_user: per_user.iter().map(RunningMean::estimate).collect(),
                pooled: pooled.estimate(),
            })
            .collect()
    }
}

/// Serial Monte Carlo over `trials` draws for the given cells.
pub fn ergodic_rates_mc(
    profile: &CorrelationProfile,
    config: &SystemConfig,
    detectors: &[Detector],
    cells: &[usize],
    trials: u64,
) -> Result<Vec<RateEstimate>> {
    if trials == 0 {
        return Err(Error::Config("at least one trial is required"));
    }
    let simulation = RateSimulation::new(profile, config, detectors, cells)?;
    let mut acc = RateAccumulator::new(&simulation);
    for index in 0..trials {
        acc.push(&simulation.trial(index));
    }
    Ok(acc.finish())
}

/// Ergodic rate of every user of every cell with one detector.
pub fn ergodic_rate_mc(
    profile: &CorrelationProfile,
    config: &SystemConfig,
    detector: Detector,
    trials: u64,
) -> Result<RateEstimate> {
    let cells: Vec<usize> = (0..config.cells).collect();
    let mut estimates = ergodic_rates_mc(profile, config, &[detector], &cells, trials)?;
    Ok(estimates.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, hermitian_eigenvalues, identity};
    use crate::model::{
        build_simple_profile, draw_channels, draw_pilot_observation, mmse_estimate,
        SimpleModelSpec, TrainingSnr,
    };

    fn cfg(cells: usize, users: usize, antennas: usize, training: TrainingSnr) -> SystemConfig {
        SystemConfig::new(cells, users, antennas, 1.0, training, 17).unwrap()
    }

    #[test]
    fn perfect_single_cell_has_no_interference_matrix() {
        let c = cfg(1, 2, 4, TrainingSnr::Infinite);
        let profile = CorrelationProfile::identity(1, 2, 4).unwrap();
        let stats = PilotStatistics::new(&profile, 0, c.training_snr, InversionMode::Strict).unwrap();
        assert!(interference_matrix(&stats).matrix.norm() < 1e-12);
    }

    #[test]
    fn simple_model_interference_matrix() {
        let (n, p, cells, users, alpha) = (9, 3, 4, 2, 0.1);
        let c = cfg(cells, users, n, TrainingSnr::Infinite);
        let spec = SimpleModelSpec::dft(n, p, alpha).unwrap();
        let profile = build_simple_profile(&c, &spec).unwrap();
        let stats = PilotStatistics::new(&profile, 1, c.training_snr, InversionMode::default()).unwrap();
        let lbar = 1.0 + alpha * (cells - 1) as f64;
        let k = users as f64;
        let weight = k * (1.0 - 1.0 / lbar) + (cells - 1) as f64 * k * alpha;
        let expected = &spec.basis * spec.basis.adjoint() * c64(weight * n as f64 / p as f64, 0.0);
        let z = interference_matrix(&stats);
        assert!((z.matrix - expected).norm() < 1e-10);
        assert!(hermitian_eigenvalues(stats.interference())[0] > -1e-10);
    }

    #[test]
    fn matched_filter_is_the_estimate() {
        let mut means = alloc::vec![CMatrix::zeros(3, 1)];
        means[0][(0, 0)] = c64(1.0, 0.0);
        let est = CellEstimate {
            cell: 0,
            y: means[0].clone(),
            means,
        };
        let f = matched_filter(&est);
        assert_eq!(f.vectors, *est.hhat());
        assert_eq!(f.vector(0).norm(), est.hhat_user(0).norm());
    }

    #[test]
    fn zero_estimate_is_degenerate() {
        let c = cfg(1, 1, 3, TrainingSnr::Finite(1.0));
        let profile = CorrelationProfile::identity(1, 1, 3).unwrap();
        let stats = PilotStatistics::new(&profile, 0, c.training_snr, InversionMode::Strict).unwrap();
        let est = stats.estimate(&CMatrix::zeros(3, 1));
        let report = conditional_sinr(&matched_filter(&est), &est, &stats, c.snr);
        assert!(report.users[0].degenerate);
        assert_eq!(report.users[0].sinr, 0.0);
    }

    fn random_estimate(cells: usize, users: usize, n: usize, seed: u64) -> (CorrelationProfile, SystemConfig, crate::model::PilotEstimate) {
        let c = SystemConfig::new(cells, users, n, 0.8, TrainingSnr::Finite(2.0), seed).unwrap();
        let profile = CorrelationProfile::from_factors(cells, users, n, |j, l, k| {
            let mut rng = crate::rng::substream(seed, crate::rng::Purpose::Auxiliary, [j as u64, l as u64, k as u64, 0]);
            let f = CMatrix::from_fn(n, n, |_, _| crate::rng::circular_gaussian(&mut rng));
            f * c64(if j == l { 0.4 } else { 0.15 }, 0.0)
        })
        .unwrap();
        let draw = draw_channels(&profile, seed, 0);
        let obs = draw_pilot_observation(&draw, &c);
        let est = mmse_estimate(&profile, &obs, &c).unwrap();
        (profile, c, est)
    }

    #[test]
    fn mmse_solves_its_linear_system() {
        let (_, c, est) = random_estimate(2, 3, 6, 5);
        let stats = &est.statistics[1];
        let cell = &est.cells[1];
        let z = interference_matrix(stats);
        let lambda = c.default_lambda();
        let f = mmse_filter(cell, &z, lambda).unwrap();
        let n = c.antennas;
        let mut m = cell.hhat() * cell.hhat().adjoint() + &z.matrix;
        for i in 0..n {
            m[(i, i)] += c64(n as f64 * lambda, 0.0);
        }
        let residual = (&m * &f.vectors - cell.hhat()).norm() / cell.hhat().norm();
        assert!(residual < 1e-10, "{residual}");
    }

    #[test]
    fn heavy_regularization_aligns_with_mf() {
        let (_, _, est) = random_estimate(2, 3, 6, 8);
        let z = interference_matrix(&est.statistics[0]);
        let f = mmse_filter(&est.cells[0], &z, 1e9).unwrap();
        for m in 0..3 {
            let a = f.vector(m);
            let b = est.cells[0].hhat_user(m);
            let cosine = a.dotc(&b).norm() / (a.norm() * b.norm());
            assert!((cosine - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn single_user_without_interference_is_scaled_mf() {
        let n = 4;
        let mut means = alloc::vec![CMatrix::zeros(n, 1)];
        for i in 0..n {
            means[0][(i, 0)] = c64(0.3 * i as f64, 0.1);
        }
        let est = CellEstimate { cell: 0, y: means[0].clone(), means };
        let z = InterferenceMatrix { cell: 0, matrix: CMatrix::zeros(n, n) };
        let lambda = 0.25;
        let f = mmse_filter(&est, &z, lambda).unwrap();
        let h = est.hhat_user(0);
        let expected = &h / c64(h.norm_squared() + n as f64 * lambda, 0.0);
        assert!((f.vector(0) - expected).norm() < 1e-14);
    }

    #[test]
    fn single_user_mrc() {
        let n = 6;
        let c = SystemConfig::new(1, 1, n, 2.5, TrainingSnr::Infinite, 1).unwrap();
        let profile = CorrelationProfile::identity(1, 1, n).unwrap();
        let draw = draw_channels(&profile, 4, 0);
        let obs = draw_pilot_observation(&draw, &c);
        let est = mmse_estimate(&profile, &obs, &c).unwrap();
        let report = conditional_sinr(&matched_filter(&est.cells[0]), &est.cells[0], &est.statistics[0], c.snr);
        let h = draw.h(0, 0).column(0).norm_squared();
        assert!((report.users[0].sinr - c.snr * h).abs() < 1e-10 * c.snr * h);
    }

    #[test]
    fn decomposition_and_monotonicity() {
        let (_, c, est) = random_estimate(3, 2, 5, 21);
        let stats = &est.statistics[2];
        let cell = &est.cells[2];
        let filter = mmse_filter(cell, &interference_matrix(stats), c.default_lambda()).unwrap();
        // Dense B for user m.
        for m in 0..2 {
            let r = filter.vector(m);
            let n = c.antennas;
            let mut b = identity(n) * c64(1.0 / c.snr, 0.0);
            for k in 0..2 {
                if k != m {
                    let h = cell.hhat_user(k);
                    b += &h * h.adjoint();
                }
                b += stats.error_covariance(k);
                for l in [0, 1] {
                    let mean = cell.means[l].column(k).into_owned();
                    b += &mean * mean.adjoint() + stats.conditional_covariance(l, k);
                }
            }
            let dense = r.dotc(&(&b * &r)).re;
            let report = conditional_sinr(&filter, cell, stats, c.snr);
            let sum = report.users[m].denominator();
            assert!((dense - sum).abs() <= 1e-12 * dense, "{dense} {sum}");
        }
        let mut previous = 0.0;
        for snr in [0.01, 0.1, 1.0, 10.0, 100.0] {
            let s = conditional_sinr(&filter, cell, stats, snr).users[0].sinr;
            assert!(s >= previous);
            previous = s;
        }
        assert!(conditional_sinr(&filter, cell, stats, 1e-12).users[0].sinr < 1e-9);
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let c = cfg(2, 2, 4, TrainingSnr::Finite(5.0));
        let profile = build_simple_profile(&c, &SimpleModelSpec::dft(4, 2, 0.3).unwrap()).unwrap();
        let a = ergodic_rate_mc(&profile, &c, Detector::MatchedFilter, 1).unwrap();
        let b = ergodic_rate_mc(&profile, &c, Detector::MatchedFilter, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.users.len(), 4);
        assert!(ergodic_rate_mc(&profile, &c, Detector::MatchedFilter, 0).is_err());
    }
}
