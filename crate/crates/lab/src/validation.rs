//! Named invariant checks.
//!
//! Every check measures one nonnegative number (an error or a violation
//! count) and passes when it is at most its tolerance.

use std::io;

use mmimo_core::closedform::{
    dof_required_mf, dof_required_mmse, gamma_mf_simple, gamma_mmse_simple, gamma_rate_infinity,
    rate_mf_simple, rate_mmse_simple, SimpleSystemPoint, BISECTION_TOLERANCE,
};
use mmimo_core::detect::{
    conditional_sinr, interference_matrix, matched_filter, Detector, MmseFilterBuilder,
    RateSimulation,
};
use mmimo_core::deteq::{de_sinr_mf, de_sinr_mmse};
use mmimo_core::linalg::{c64, hermitian_eigenvalues, identity, outer, quadratic_form, CMatrix};
use mmimo_core::model::{
    build_simple_profile, cell_pilot_observation, draw_cell_channels, validate_profile,
    CorrelationProfile, InversionMode, PilotStatistics, SimpleModelSpec, SystemConfig,
    TrainingSnr, ValidationOptions,
};
use mmimo_core::rmt::{
    solve_derivative, solve_fixed_point, FixedPointOptions, FixedPointProblem,
};
use mmimo_core::rng::{circular_gaussian, substream, Purpose};
use serde::Serialize;

use crate::config::ValidateConfig;
use crate::LabError;

type Measure = fn(u64) -> mmimo_core::Result<f64>;

pub struct Check {
    pub name: &'static str,
    pub description: &'static str,
    pub tolerance: f64,
    measure: Measure,
}

pub fn catalogue() -> Vec<Check> {
    vec![
        Check {
            name: "fixed-point-scalar",
            description: "identity covariances with K = N, rho = 1: |delta - (sqrt 5 - 1)/2|",
            tolerance: 1e-10,
            measure: fixed_point_scalar,
        },
        Check {
            name: "fixed-point-uniqueness",
            description: "spread of delta over 10 random starting points",
            tolerance: 1e-11,
            measure: fixed_point_uniqueness,
        },
        Check {
            name: "derivative-finite-difference",
            description: "relative error of T' (Theta = I) against -dT/drho on 5 instances",
            tolerance: 1e-5,
            measure: derivative_finite_difference,
        },
        Check {
            name: "specialization-mf",
            description: "general MF equivalent vs closed form on a 5x5 (rho N, P/K) grid",
            tolerance: 1e-6,
            measure: specialization_mf,
        },
        Check {
            name: "specialization-mmse",
            description: "general MMSE equivalent vs closed form on a 5x5 (rho N, P/K) grid",
            tolerance: 1e-6,
            measure: specialization_mmse,
        },
        Check {
            name: "closed-form-ordering",
            description: "violations of MF <= MMSE <= ceiling on a 10x10 grid",
            tolerance: 0.0,
            measure: closed_form_ordering,
        },
        Check {
            name: "mf-dof-round-trip",
            description: "|rate at the MF requirement - eta R_inf|",
            tolerance: 1e-9,
            measure: mf_round_trip,
        },
        Check {
            name: "mmse-dof-round-trip",
            description: "requirements that miss the target or are not minimal",
            tolerance: 0.0,
            measure: mmse_round_trip,
        },
        Check {
            name: "profile-assumptions",
            description: "profile validation violations on the angular-bin and a random profile",
            tolerance: 0.0,
            measure: profile_assumptions,
        },
        Check {
            name: "energy-normalization",
            description: "relative error of sum_k tr R_jjk against K N",
            tolerance: 1e-12,
            measure: energy_normalization,
        },
        Check {
            name: "estimator-consistency",
            description: "max |hhat - R Q y| with Q from a dense inverse",
            tolerance: 1e-10,
            measure: estimator_consistency,
        },
        Check {
            name: "error-covariance-psd",
            description: "most negative eigenvalue of any C_jjk",
            tolerance: 1e-10,
            measure: error_covariance_psd,
        },
        Check {
            name: "sinr-decomposition",
            description: "relative gap between the split denominator and r^H B r",
            tolerance: 1e-10,
            measure: sinr_decomposition,
        },
        Check {
            name: "mmse-dominates-mf",
            description: "(trial, user) pairs with MMSE rate below MF rate, 40 paired trials",
            tolerance: 0.0,
            measure: mmse_dominates_mf,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub check: String,
    pub measured: f64,
    pub tolerance: f64,
    pub status: String,
    pub detail: String,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.status == "pass"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub outcomes: Vec<CheckOutcome>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(CheckOutcome::passed)
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        for outcome in &self.outcomes {
            w.serialize(outcome)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Run the selected checks in catalogue order.
pub fn run_validation(cfg: &ValidateConfig) -> Result<ValidationReport, LabError> {
    let all = catalogue();
    let known = |name: &str| all.iter().any(|c| c.name == name);
    if let Some(selected) = &cfg.checks {
        if selected.is_empty() {
            return Err(LabError::config("validate: empty check selection"));
        }
        if let Some(bad) = selected.iter().find(|n| !known(n)) {
            return Err(LabError::config(format!("validate: unknown check {bad:?}")));
        }
    }
    if let Some(bad) = cfg.tolerances.keys().find(|n| !known(n)) {
        return Err(LabError::config(format!("validate: tolerance for unknown check {bad:?}")));
    }
    if let Some((name, _)) = cfg.tolerances.iter().find(|(_, t)| !(**t >= 0.0)) {
        return Err(LabError::config(format!("validate: tolerance of {name:?} must be nonnegative")));
    }
    let outcomes = all
        .iter()
        .filter(|c| cfg.checks.as_ref().map_or(true, |s| s.iter().any(|n| n == c.name)))
        .map(|c| {
            let tolerance = cfg.tolerances.get(c.name).copied().unwrap_or(c.tolerance);
            let (measured, status, detail) = match (c.measure)(cfg.seed) {
                Ok(m) if m <= tolerance => (m, "pass", c.description.to_string()),
                Ok(m) => (m, "fail", c.description.to_string()),
                Err(e) => (f64::NAN, "fail", format!("{}: {e}", c.description)),
            };
            CheckOutcome {
                check: c.name.to_string(),
                measured,
                tolerance,
                status: status.to_string(),
                detail,
            }
        })
        .collect();
    Ok(ValidationReport { outcomes })
}

fn random_covariance(n: usize, rank: usize, seed: u64, index: u64) -> CMatrix {
    let mut rng = substream(seed, Purpose::Auxiliary, [index, n as u64, rank as u64, 1]);
    let g = CMatrix::from_fn(n, rank, |_, _| circular_gaussian(&mut rng));
    &g * g.adjoint() * c64(1.0 / rank as f64, 0.0)
}

fn random_problem(n: usize, users: usize, rho: f64, seed: u64, index: u64) -> mmimo_core::Result<FixedPointProblem> {
    let covariances = (0..users)
        .map(|k| random_covariance(n, 1 + k % n, seed, 100 * index + k as u64))
        .collect();
    FixedPointProblem::new(
        identity(n),
        random_covariance(n, 2, seed, 100 * index + 99) * c64(0.2, 0.0),
        covariances,
        rho,
    )
}

fn random_profile(cells: usize, users: usize, n: usize, seed: u64) -> mmimo_core::Result<CorrelationProfile> {
    CorrelationProfile::from_matrices(cells, users, n, |j, l, k| {
        let scale = if j == l { 1.0 } else { 0.25 };
        random_covariance(n, n, seed, (j * 100 + l * 10 + k) as u64 + 7000) * c64(scale, 0.0)
    })
}

fn fixed_point_scalar(_: u64) -> mmimo_core::Result<f64> {
    let n = 4;
    let problem = FixedPointProblem::new(identity(n), CMatrix::zeros(n, n), vec![identity(n); n], 1.0)?;
    let sol = solve_fixed_point(&problem, &FixedPointOptions::default())?;
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    Ok(sol.delta.iter().fold(0.0, |m, d| m.max((d - golden).abs())))
}

fn fixed_point_uniqueness(seed: u64) -> mmimo_core::Result<f64> {
    let problem = random_problem(8, 6, 0.4, seed, 1)?;
    let reference = solve_fixed_point(&problem, &FixedPointOptions::default())?;
    let mut rng = substream(seed, Purpose::Auxiliary, [2, 0, 0, 0]);
    let mut spread: f64 = 0.0;
    for _ in 0..10 {
        let init = (0..problem.users())
            .map(|_| 10f64.powf(-3.0 + 4.0 * circular_gaussian(&mut rng).re.abs().min(1.0)))
            .collect();
        let options = FixedPointOptions {
            init: Some(init),
            ..FixedPointOptions::default()
        };
        let sol = solve_fixed_point(&problem, &options)?;
        for (a, b) in sol.delta.iter().zip(&reference.delta) {
            spread = spread.max((a - b).abs());
        }
    }
    Ok(spread)
}

fn derivative_finite_difference(seed: u64) -> mmimo_core::Result<f64> {
    let mut worst: f64 = 0.0;
    for index in 0..5u64 {
        let rho = 0.2 + 0.6 * index as f64;
        let problem = random_problem(10, 5 + index as usize, rho, seed, 10 + index)?;
        let options = FixedPointOptions::default();
        let sol = solve_fixed_point(&problem, &options)?;
        let der = solve_derivative(&problem, &sol, &identity(problem.dim()))?;
        let h = 1e-5 * rho;
        let plus = solve_fixed_point(&problem.with_rho(rho + h), &options)?;
        let minus = solve_fixed_point(&problem.with_rho(rho - h), &options)?;
        let fd = (&minus.t - &plus.t) * c64(1.0 / (2.0 * h), 0.0);
        worst = worst.max((&der.t_prime - &fd).norm() / fd.norm());
    }
    Ok(worst)
}

const SPEC_ANTENNAS: usize = 60;
const SPEC_USERS: usize = 2;

fn specialization(mmse: bool) -> mmimo_core::Result<f64> {
    let mut worst: f64 = 0.0;
    for &snr_n in &[1.0, 10.0, 100.0, 1e3, 1e4] {
        for &p in &[4usize, 10, 20, 40, 60] {
            let snr = snr_n / SPEC_ANTENNAS as f64;
            let cfg = SystemConfig::new(4, SPEC_USERS, SPEC_ANTENNAS, snr, TrainingSnr::Infinite, 0)?;
            let profile = build_simple_profile(&cfg, &SimpleModelSpec::dft(SPEC_ANTENNAS, p, 0.3)?)?;
            let stats = PilotStatistics::new(&profile, 0, cfg.training_snr, InversionMode::PseudoInverse)?;
            let point = SimpleSystemPoint::new(snr_n, p as f64 / SPEC_USERS as f64, 0.3, 4)?;
            let (general, closed) = if mmse {
                let de = de_sinr_mmse(&stats, snr, 1.0 / snr_n, &FixedPointOptions::default())?;
                (de.users[0].gamma, gamma_mmse_simple(&point)?.gamma)
            } else {
                (de_sinr_mf(&stats, snr).users[0].gamma, gamma_mf_simple(&point).gamma)
            };
            worst = worst.max((general - closed).abs() / closed);
        }
    }
    Ok(worst)
}

fn specialization_mf(_: u64) -> mmimo_core::Result<f64> {
    specialization(false)
}

fn specialization_mmse(_: u64) -> mmimo_core::Result<f64> {
    specialization(true)
}

fn closed_form_ordering(_: u64) -> mmimo_core::Result<f64> {
    let mut violations = 0;
    for &(alpha, cells) in &[(0.3, 4), (0.1, 4)] {
        let ceiling = gamma_rate_infinity(alpha, cells)?.gamma().unwrap_or(f64::INFINITY);
        for i in 0..10 {
            for j in 0..10 {
                let snr_n = 10f64.powf(-1.0 + 0.5 * i as f64);
                let dof = 10f64.powf(-0.5 + 0.35 * j as f64);
                let p = SimpleSystemPoint::new(snr_n, dof, alpha, cells)?;
                let mf = gamma_mf_simple(&p).gamma;
                let mmse = gamma_mmse_simple(&p)?.gamma;
                if !(mf <= mmse && mmse <= ceiling) {
                    violations += 1;
                }
            }
        }
    }
    Ok(violations as f64)
}

const ROUND_TRIP_ETAS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
const ROUND_TRIP_SNRS: [f64; 4] = [10.0, 100.0, 1e3, 1e4];

fn mf_round_trip(_: u64) -> mmimo_core::Result<f64> {
    let mut worst: f64 = 0.0;
    for &alpha in &[0.3, 0.1] {
        for &eta in &ROUND_TRIP_ETAS {
            for &snr_n in &ROUND_TRIP_SNRS {
                let c = dof_required_mf(eta, snr_n, alpha, 4)?;
                if let (Some(dof), Some(r_inf)) = (c.requirement.value(), c.rate_infinity.rate()) {
                    let achieved = rate_mf_simple(&SimpleSystemPoint::new(snr_n, dof, alpha, 4)?);
                    worst = worst.max((achieved - eta * r_inf).abs());
                }
            }
        }
    }
    Ok(worst)
}

fn mmse_round_trip(_: u64) -> mmimo_core::Result<f64> {
    let mut misses = 0;
    for &alpha in &[0.3, 0.1] {
        for &eta in &ROUND_TRIP_ETAS {
            for &snr_n in &ROUND_TRIP_SNRS {
                let c = dof_required_mmse(eta, snr_n, alpha, 4, 1.0 / snr_n)?;
                if let (Some(dof), Some(r_inf)) = (c.requirement.value(), c.rate_infinity.rate()) {
                    let target = eta * r_inf;
                    let p = SimpleSystemPoint::new(snr_n, dof, alpha, 4)?;
                    let below = p.with_dof(dof * (1.0 - 2.0 * BISECTION_TOLERANCE))?;
                    if rate_mmse_simple(&p)? < target || rate_mmse_simple(&below)? >= target {
                        misses += 1;
                    }
                }
            }
        }
    }
    Ok(misses as f64)
}

fn profile_assumptions(seed: u64) -> mmimo_core::Result<f64> {
    let cfg = SystemConfig::new(3, 4, 16, 1.0, TrainingSnr::Infinite, seed)?;
    let simple = build_simple_profile(&cfg, &SimpleModelSpec::dft(16, 6, 0.2)?)?;
    let random = random_profile(3, 4, 16, seed)?;
    let options = ValidationOptions::default();
    let violations = validate_profile(&simple, &cfg, &options)?.violations.len()
        + validate_profile(&random, &cfg, &options)?.violations.len();
    Ok(violations as f64)
}

fn energy_normalization(_: u64) -> mmimo_core::Result<f64> {
    let (cells, users, n) = (4, 10, 60);
    let cfg = SystemConfig::new(cells, users, n, 1.0, TrainingSnr::Infinite, 0)?;
    let profile = build_simple_profile(&cfg, &SimpleModelSpec::dft(n, 20, 0.1)?)?;
    let expected = (users * n) as f64;
    let mut worst: f64 = 0.0;
    for j in 0..cells {
        let total: f64 = (0..users).map(|k| profile.correlation(j, j, k).trace().re).sum();
        worst = worst.max((total - expected).abs() / expected);
    }
    Ok(worst)
}

fn estimator_consistency(seed: u64) -> mmimo_core::Result<f64> {
    let (cells, users, n) = (3, 3, 8);
    let profile = random_profile(cells, users, n, seed)?;
    let training = TrainingSnr::Finite(2.0);
    let mut worst: f64 = 0.0;
    for j in 0..cells {
        let stats = PilotStatistics::new(&profile, j, training, InversionMode::Strict)?;
        let channels = draw_cell_channels(&profile, j, seed, 0);
        let y = cell_pilot_observation(&channels, training, seed, 0);
        let est = stats.estimate(&y);
        for k in 0..users {
            let mut total = identity(n) * c64(0.5, 0.0);
            for l in 0..cells {
                total += profile.correlation(j, l, k);
            }
            let q = total
                .try_inverse()
                .ok_or(mmimo_core::Error::SingularCovariance { cell: j, user: k })?;
            for l in 0..cells {
                let expected = profile.correlation(j, l, k) * &q * y.column(k);
                worst = worst.max((est.means[l].column(k) - expected).camax());
            }
        }
    }
    Ok(worst)
}

fn error_covariance_psd(seed: u64) -> mmimo_core::Result<f64> {
    let profile = random_profile(3, 3, 8, seed)?;
    let cfg = SystemConfig::new(3, 4, 16, 1.0, TrainingSnr::Infinite, seed)?;
    let simple = build_simple_profile(&cfg, &SimpleModelSpec::dft(16, 5, 0.5)?)?;
    let mut lowest: f64 = 0.0;
    for (p, training) in [(&profile, TrainingSnr::Finite(1.0)), (&simple, TrainingSnr::Infinite)] {
        for j in 0..p.cells() {
            let stats = PilotStatistics::new(p, j, training, InversionMode::PseudoInverse)?;
            for k in 0..p.users() {
                let smallest = hermitian_eigenvalues(&stats.error_covariance(k))[0];
                lowest = lowest.min(smallest);
            }
        }
    }
    Ok(-lowest)
}

fn sinr_decomposition(seed: u64) -> mmimo_core::Result<f64> {
    let (cells, users, n, snr) = (3, 3, 8, 1.7);
    let profile = random_profile(cells, users, n, seed)?;
    let training = TrainingSnr::Finite(3.0);
    let j = 1;
    let stats = PilotStatistics::new(&profile, j, training, InversionMode::Strict)?;
    let channels = draw_cell_channels(&profile, j, seed, 3);
    let est = stats.estimate(&cell_pilot_observation(&channels, training, seed, 3));
    let z = interference_matrix(&stats);
    let filters = [
        matched_filter(&est),
        MmseFilterBuilder::new(&z, 1.0 / (snr * n as f64))?.build(&est),
    ];
    let mut worst: f64 = 0.0;
    for filter in &filters {
        let report = conditional_sinr(filter, &est, &stats, snr);
        for m in 0..users {
            let mut b = identity(n) * c64(1.0 / snr, 0.0);
            for k in 0..users {
                b += stats.error_covariance(k);
                if k != m {
                    b += outer(&est.hhat_user(k), &est.hhat_user(k));
                }
            }
            for l in (0..cells).filter(|&l| l != j) {
                for k in 0..users {
                    let mean = est.means[l].column(k).into_owned();
                    b += outer(&mean, &mean) + stats.conditional_covariance(l, k);
                }
            }
            let dense = quadratic_form(&b, &filter.vector(m));
            worst = worst.max((report.users[m].denominator() - dense).abs() / dense);
        }
    }
    Ok(worst)
}

fn mmse_dominates_mf(seed: u64) -> mmimo_core::Result<f64> {
    let cfg = SystemConfig::new(4, 6, 24, 1.0, TrainingSnr::Infinite, seed)?;
    let profile = build_simple_profile(&cfg, &SimpleModelSpec::dft(24, 12, 0.2)?)?;
    let detectors = [Detector::MatchedFilter, Detector::mmse_default(&cfg)];
    let sim = RateSimulation::new(&profile, &cfg, &detectors, &[0, 2])?;
    let mut violations = 0;
    for index in 0..40 {
        let trial = sim.trial(index);
        violations += trial.rates[0]
            .iter()
            .zip(&trial.rates[1])
            .filter(|(mf, mmse)| **mmse < **mf - 1e-12)
            .count();
    }
    Ok(violations as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let all = catalogue();
        for (i, a) in all.iter().enumerate() {
            assert!(all[i + 1..].iter().all(|b| b.name != a.name));
        }
    }

    #[test]
    fn defaults_pass() {
        let report = run_validation(&ValidateConfig::default()).unwrap();
        for o in &report.outcomes {
            assert!(o.passed(), "{o:?}");
        }
    }

    #[test]
    fn tightened_tolerance_fails_by_name() {
        let mut cfg = ValidateConfig {
            checks: Some(vec!["derivative-finite-difference".into(), "fixed-point-scalar".into()]),
            ..ValidateConfig::default()
        };
        cfg.tolerances.insert("derivative-finite-difference".into(), 1e-15);
        let report = run_validation(&cfg).unwrap();
        let names: Vec<&str> = report.outcomes.iter().map(|o| o.check.as_str()).collect();
        assert_eq!(names, ["fixed-point-scalar", "derivative-finite-difference"]);
        assert!(report.outcomes[0].passed());
        assert!(!report.outcomes[1].passed());
        assert!(!report.passed());
    }

    #[test]
    fn bad_selections() {
        let empty = ValidateConfig {
            checks: Some(Vec::new()),
            ..ValidateConfig::default()
        };
        assert!(matches!(run_validation(&empty), Err(LabError::Config(_))));
        let unknown = ValidateConfig {
            checks: Some(vec!["nope".into()]),
            ..ValidateConfig::default()
        };
        assert!(matches!(run_validation(&unknown), Err(LabError::Config(_))));
    }
}
