use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(&'static str),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("pilot covariance of cell {cell}, user {user} is singular")]
    SingularCovariance { cell: usize, user: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("fixed point did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("derivative system is ill-conditioned (smallest singular value {smallest_singular_value:e})")]
    IllConditioned { smallest_singular_value: f64 },

    #[error("closed form is singular: Z^2 = {z_squared} <= K/P = {users_per_dof}")]
    ClosedFormSingular { z_squared: f64, users_per_dof: f64 },
}
