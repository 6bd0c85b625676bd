//! Deterministic equivalents of resolvent traces.
//!
//! For `H` with independent columns `h_k = N^{-1/2} R_k^{1/2} u_k` the
//! normalized trace `(1/N) tr D (H H^H + S + rho I)^{-1}` is approximated by
//! `(1/N) tr D T(rho)` where
//!
//! ```text
//! T = ( (1/N) sum_k R_k / (1 + delta_k) + S + rho I )^{-1},
//! delta_k = (1/N) tr R_k T.
//! ```
//!
//! The quadratic form `(1/N) tr D Q Theta Q` with `Q` the resolvent is
//! approximated by `(1/N) tr D T'` where `T'` solves a `K x K` linear system
//! obtained by differentiating the fixed point. With `Theta = I`,
//! `T' = -dT/drho`.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_traits::Float;

use crate::linalg::{
    self, c64, hermitian_spectral_norm, inverse_hpd, trace_product, CMatrix,
};
use crate::rng::{circular_gaussian_vector, substream, Purpose};
use crate::stats::{Estimate, RunningMean};
use crate::{Error, Result};

/// Inputs of the fixed point: `D`, `S`, the covariances `R_k` and `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointProblem {
    pub d: CMatrix,
    pub s: CMatrix,
    pub covariances: Vec<CMatrix>,
    pub rho: f64,
}

impl FixedPointProblem {
    pub fn new(d: CMatrix, s: CMatrix, covariances: Vec<CMatrix>, rho: f64) -> Result<Self> {
        let n = d.nrows();
        if n == 0 {
            return Err(Error::Config("resolvent dimension must be positive"));
        }
        let square = |m: &CMatrix, what| {
            if m.nrows() != n || m.ncols() != n {
                Err(Error::Dimension {
                    what,
                    expected: n,
                    got: m.nrows(),
                })
            } else {
                Ok(())
            }
        };
        square(&d, "D")?;
        square(&s, "S")?;
        for r in &covariances {
            square(r, "R_k")?;
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::Config("rho must be positive and finite"));
        }
        Ok(Self {
            d,
            s,
            covariances,
            rho,
        })
    }

    pub fn dim(&self) -> usize {
        self.d.nrows()
    }

    pub fn users(&self) -> usize {
        self.covariances.len()
    }

    pub fn with_rho(&self, rho: f64) -> Self {
        Self {
            rho,
            ..self.clone()
        }
    }

    /// Largest spectral norm among `D`, `S` and the `R_k`.
    pub fn spectral_bound(&self) -> f64 {
        core::iter::once(&self.d)
            .chain(core::iter::once(&self.s))
            .chain(self.covariances.iter())
            .map(hermitian_spectral_norm)
            .fold(0.0, f64::max)
    }

    /// `T` for a given `delta`.
    pub fn resolvent(&self, delta: &[f64]) -> Result<CMatrix> {
        let n = self.dim();
        let mut m = self.s.clone();
        for (r, &dk) in self.covariances.iter().zip(delta) {
            m += r * c64(1.0 / (n as f64 * (1.0 + dk)), 0.0);
        }
        for i in 0..n {
            m[(i, i)] += c64(self.rho, 0.0);
        }
        inverse_hpd(&m).ok_or(Error::NotPositiveDefinite("T^{-1}"))
    }

    /// Group indices of identical covariances; returns the class of every `k`
    /// and one representative per class.
    fn classes(&self) -> (Vec<usize>, Vec<usize>) {
        let mut representatives: Vec<usize> = Vec::new();
        let mut class_of = Vec::with_capacity(self.users());
        for (k, r) in self.covariances.iter().enumerate() {
            match representatives
                .iter()
                .position(|&rep| self.covariances[rep] == *r)
            {
                Some(c) => class_of.push(c),
                None => {
                    representatives.push(k);
                    class_of.push(representatives.len() - 1);
                }
            }
        }
        (class_of, representatives)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointOptions {
    pub abs_tolerance: f64,
    pub rel_tolerance: f64,
    pub max_iter: usize,
    /// Starting point; `1/rho` for every user when absent.
    pub init: Option<Vec<f64>>,
    /// Relaxation `theta` in `delta <- (1 - theta) delta + theta update`.
    pub damping: f64,
    /// Drop to `theta = 0.5` when undamped steps keep growing.
    pub adaptive_damping: bool,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            abs_tolerance: 1e-12,
            rel_tolerance: 1e-12,
            max_iter: 10_000,
            init: None,
            damping: 1.0,
            adaptive_damping: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointSolution {
    pub t: CMatrix,
    pub delta: Vec<f64>,
    pub iterations: usize,
    /// `max_k |delta_k - (1/N) tr R_k T|` at the returned point.
    pub residual: f64,
}

impl FixedPointSolution {
    /// `(1/N) tr D T`.
    pub fn trace_functional(&self, d: &CMatrix) -> f64 {
        trace_product(d, &self.t).re / self.t.nrows() as f64
    }
}

fn delta_update(problem: &FixedPointProblem, t: &CMatrix) -> Vec<f64> {
    let n = problem.dim() as f64;
    problem
        .covariances
        .iter()
        .map(|r| trace_product(r, t).re / n)
        .collect()
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Solve the fixed point by (optionally damped) iteration.
pub fn solve_fixed_point(
    problem: &FixedPointProblem,
    options: &FixedPointOptions,
) -> Result<FixedPointSolution> {
    if !(options.abs_tolerance > 0.0 || options.rel_tolerance > 0.0) {
        return Err(Error::Config("fixed-point tolerance must be positive"));
    }
    if !(options.damping > 0.0 && options.damping <= 1.0) {
        return Err(Error::Config("damping must lie in (0, 1]"));
    }
    let users = problem.users();
    let mut delta = match &options.init {
        Some(init) if init.len() != users => {
            return Err(Error::Dimension {
                what: "fixed-point init",
                expected: users,
                got: init.len(),
            })
        }
        Some(init) if init.iter().any(|v| !(*v >= 0.0)) => {
            return Err(Error::Config("fixed-point init must be nonnegative"))
        }
        Some(init) => init.clone(),
        None => alloc::vec![1.0 / problem.rho; users],
    };

    let mut theta = options.damping;
    let mut previous_step = f64::INFINITY;
    let mut growing = 0usize;
    let mut step = f64::INFINITY;
    for iteration in 1..=options.max_iter {
        let t = problem.resolvent(&delta)?;
        let update = delta_update(problem, &t);
        step = sup_distance(&update, &delta);
        let scale = update.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        if step <= options.abs_tolerance + options.rel_tolerance * scale {
            let t = problem.resolvent(&update)?;
            let residual = sup_distance(&update, &delta_update(problem, &t));
            return Ok(FixedPointSolution {
                t,
                delta: update,
                iterations: iteration,
                residual,
            });
        }
        if options.adaptive_damping && theta >= 1.0 {
            growing = if step > previous_step { growing + 1 } else { 0 };
            if growing >= 5 {
                theta = 0.5;
            }
        }
        previous_step = step;
        for (d, u) in delta.iter_mut().zip(&update) {
            *d = (1.0 - theta) * *d + theta * u;
        }
    }
    Err(Error::NonConvergence {
        iterations: options.max_iter,
        residual: step,
    })
}

/// Derivative quantities for one `Theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeSolution {
    pub t_prime: CMatrix,
    pub delta_prime: Vec<f64>,
    /// `[J]_kl = (1/N) tr(R_k T R_l T) / (N (1 + delta_l)^2)`.
    pub jacobian: DMatrix<f64>,
    pub v: Vec<f64>,
    pub theta: CMatrix,
}

/// The part of the derivative system that does not depend on `Theta`:
/// the products `R_k T` and the matrix `J`. Build once, then call
/// [`DerivativeSystem::solve`] for every `Theta`.
#[derive(Debug, Clone)]
pub struct DerivativeSystem<'a> {
    problem: &'a FixedPointProblem,
    solution: &'a FixedPointSolution,
    class_of: Vec<usize>,
    jacobian: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

/// Below this singular value `I - J` is treated as singular.
pub const SINGULAR_TOLERANCE: f64 = 1e-12;

impl<'a> DerivativeSystem<'a> {
    pub fn new(problem: &'a FixedPointProblem, solution: &'a FixedPointSolution) -> Result<Self> {
        let users = problem.users();
        if solution.delta.len() != users {
            return Err(Error::Dimension {
                what: "fixed-point solution",
                expected: users,
                got: solution.delta.len(),
            });
        }
        let n = problem.dim() as f64;
        let (class_of, representatives) = problem.classes();
        let products: Vec<CMatrix> = representatives
            .iter()
            .map(|&k| &problem.covariances[k] * &solution.t)
            .collect();
        let classes = representatives.len();
        let mut class_traces = DMatrix::<f64>::zeros(classes, classes);
        for a in 0..classes {
            for b in a..classes {
                let value = trace_product(&products[a], &products[b]).re / n;
                class_traces[(a, b)] = value;
                class_traces[(b, a)] = value;
            }
        }
        let jacobian = DMatrix::from_fn(users, users, |k, l| {
            let denom = 1.0 + solution.delta[l];
            class_traces[(class_of[k], class_of[l])] / (n * denom * denom)
        });
        let system = DMatrix::<f64>::identity(users, users) - &jacobian;
        if users > 0 {
            let smallest = linalg::smallest_singular_value(&system);
            if !(smallest > SINGULAR_TOLERANCE) {
                return Err(Error::IllConditioned {
                    smallest_singular_value: smallest,
                });
            }
        }
        Ok(Self {
            problem,
            solution,
            class_of,
            jacobian,
            lu: system.lu(),
        })
    }

    pub fn jacobian(&self) -> &DMatrix<f64> {
        &self.jacobian
    }

    pub fn solve(&self, theta: &CMatrix) -> Result<DerivativeSolution> {
        let problem = self.problem;
        let t = &self.solution.t;
        let delta = &self.solution.delta;
        let n = problem.dim();
        if theta.nrows() != n || theta.ncols() != n {
            return Err(Error::Dimension {
                what: "Theta",
                expected: n,
                got: theta.nrows(),
            });
        }
        let t_theta_t = t * theta * t;
        let mut class_v: Vec<Option<f64>> = alloc::vec![None; self.class_of.len()];
        let v: Vec<f64> = (0..problem.users())
            .map(|k| {
                let c = self.class_of[k];
                *class_v[c].get_or_insert_with(|| {
                    trace_product(&problem.covariances[k], &t_theta_t).re / n as f64
                })
            })
            .collect();
        let delta_prime: Vec<f64> = if v.is_empty() {
            Vec::new()
        } else {
            let rhs = nalgebra::DVector::from_column_slice(&v);
            self.lu
                .solve(&rhs)
                .ok_or(Error::IllConditioned {
                    smallest_singular_value: 0.0,
                })?
                .iter()
                .copied()
                .collect()
        };
        let mut weighted = CMatrix::zeros(n, n);
        for ((r, dp), d) in problem.covariances.iter().zip(&delta_prime).zip(delta) {
            weighted += r * c64(dp / (n as f64 * (1.0 + d) * (1.0 + d)), 0.0);
        }
        let t_prime = &t_theta_t + t * weighted * t;
        Ok(DerivativeSolution {
            t_prime,
            delta_prime,
            jacobian: self.jacobian.clone(),
            v,
            theta: theta.clone(),
        })
    }
}

/// Solve the derivative system for a single `Theta`.
pub fn solve_derivative(
    problem: &FixedPointProblem,
    solution: &FixedPointSolution,
    theta: &CMatrix,
) -> Result<DerivativeSolution> {
    DerivativeSystem::new(problem, solution)?.solve(theta)
}

/// Monte Carlo estimate of `(1/N) tr D Q` (no `theta`) or
/// `(1/N) tr D Q Theta Q` with `Q = (H H^H + S + rho I)^{-1}` and Gaussian
/// `u_k`.
pub fn resolvent_trace_oracle(
    problem: &FixedPointProblem,
    theta: Option<&CMatrix>,
    draws: usize,
    seed: u64,
) -> Result<Estimate> {
    if draws < 2 {
        return Err(Error::Config("oracle needs at least two draws"));
    }
    let n = problem.dim();
    let scale = c64(1.0 / Float::sqrt(n as f64), 0.0);
    let (class_of, representatives) = problem.classes();
    let roots: Vec<CMatrix> = representatives
        .iter()
        .map(|&k| linalg::psd_sqrt(&problem.covariances[k]) * scale)
        .collect();
    let mut base = problem.s.clone();
    for i in 0..n {
        base[(i, i)] += c64(problem.rho, 0.0);
    }
    let mut acc = RunningMean::new();
    for draw in 0..draws {
        let mut m = base.clone();
        for (k, &class) in class_of.iter().enumerate() {
            let mut rng = substream(seed, Purpose::Oracle, [draw as u64, k as u64, 0, 0]);
            let h = &roots[class] * circular_gaussian_vector(&mut rng, n);
            m += &h * h.adjoint();
        }
        let q = inverse_hpd(&m).ok_or(Error::NotPositiveDefinite("resolvent"))?;
        let value = match theta {
            None => trace_product(&problem.d, &q),
            Some(theta) => trace_product(&problem.d, &(&q * theta * &q)),
        };
        acc.push(value.re / n as f64);
    }
    Ok(acc.estimate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::identity;

    #[test]
    fn empty_user_set_is_scaled_identity() {
        let n = 5;
        let rho = 0.7;
        let problem = FixedPointProblem::new(identity(n), CMatrix::zeros(n, n), Vec::new(), rho).unwrap();
        let sol = solve_fixed_point(&problem, &FixedPointOptions::default()).unwrap();
        assert!((&sol.t - identity(n).unscale(rho)).norm() < 1e-14);
        assert!((sol.trace_functional(&identity(n)) - 1.0 / rho).abs() < 1e-14);
        let der = solve_derivative(&problem, &sol, &identity(n)).unwrap();
        assert!((&der.t_prime - &sol.t * &sol.t).norm() == 0.0);
    }

    #[test]
    fn golden_ratio_fixed_point() {
        let n = 8;
        let problem =
            FixedPointProblem::new(identity(n), CMatrix::zeros(n, n), alloc::vec![identity(n); n], 1.0).unwrap();
        let sol = solve_fixed_point(&problem, &FixedPointOptions::default()).unwrap();
        let golden = (5f64.sqrt() - 1.0) / 2.0;
        for d in &sol.delta {
            assert!((d - golden).abs() < 1e-10, "{d}");
        }
        assert!(sol.residual < 1e-11);
    }

    #[test]
    fn non_convergence_is_reported() {
        let n = 4;
        let problem =
            FixedPointProblem::new(identity(n), CMatrix::zeros(n, n), alloc::vec![identity(n); 3], 0.1).unwrap();
        let options = FixedPointOptions {
            max_iter: 2,
            ..Default::default()
        };
        assert!(matches!(
            solve_fixed_point(&problem, &options),
            Err(Error::NonConvergence { iterations: 2, .. })
        ));
    }

    #[test]
    fn rejects_bad_inputs() {
        let n = 3;
        assert!(FixedPointProblem::new(identity(n), CMatrix::zeros(n, n), Vec::new(), 0.0).is_err());
        assert!(FixedPointProblem::new(identity(n), CMatrix::zeros(2, 2), Vec::new(), 1.0).is_err());
        let problem = FixedPointProblem::new(identity(n), CMatrix::zeros(n, n), alloc::vec![identity(n)], 1.0).unwrap();
        let options = FixedPointOptions {
            init: Some(alloc::vec![-1.0]),
            ..Default::default()
        };
        assert!(solve_fixed_point(&problem, &options).is_err());
        assert!(resolvent_trace_oracle(&problem, None, 1, 0).is_err());
    }

    #[test]
    fn zero_covariances_make_the_oracle_exact() {
        let n = 4;
        let s = CMatrix::from_fn(n, n, |i, j| if i == j { c64(0.5 + i as f64, 0.0) } else { c64(0.0, 0.0) });
        let problem =
            FixedPointProblem::new(identity(n), s.clone(), alloc::vec![CMatrix::zeros(n, n); 3], 0.5).unwrap();
        let est = resolvent_trace_oracle(&problem, None, 10, 1).unwrap();
        let mut shifted = s;
        for i in 0..n {
            shifted[(i, i)] += c64(0.5, 0.0);
        }
        let exact = inverse_hpd(&shifted).unwrap().trace().re / n as f64;
        assert!((est.mean - exact).abs() < 1e-14);
        assert!(est.std_error < 1e-14);
    }
}
