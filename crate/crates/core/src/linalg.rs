//! Dense complex helpers shared by the estimation, detection and fixed-point
//! code. Everything works on `nalgebra` dynamic matrices.

use alloc::vec::Vec;

use nalgebra::{Cholesky, ComplexField, DMatrix, DVector, SymmetricEigen};
use num_traits::Float;

pub use nalgebra::Complex;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub fn c64(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// `tr(A B)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Real part of `x^H A x`.
pub fn quadratic_form(a: &CMatrix, x: &CVector) -> f64 {
    x.dotc(&(a * x)).re
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).unscale(2.0)
}

/// `||M - M^H||_F / ||M||_F`, zero for the zero matrix.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let scale = m.norm();
    if scale == 0.0 {
        return 0.0;
    }
    (m - m.adjoint()).norm() / scale
}

/// Eigenvalues of the Hermitian part of `m`, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut values: Vec<f64> = SymmetricEigen::new(hermitian_part(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    values
}

/// Spectral norm of a Hermitian matrix.
pub fn hermitian_spectral_norm(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m)
        .iter()
        .fold(0.0, |acc: f64, v| acc.max(v.abs()))
}

/// Map the eigenvalues of a Hermitian matrix through `f`.
fn hermitian_function(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let vectors = &eig.eigenvectors;
    let scaled = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&v| C64::new(f(v), 0.0)),
    );
    let mut left = vectors.clone();
    for (mut column, s) in left.column_iter_mut().zip(scaled.iter()) {
        column *= *s;
    }
    left * vectors.adjoint()
}

/// Hermitian square root with negative eigenvalues clamped to zero.
pub fn psd_sqrt(m: &CMatrix) -> CMatrix {
    hermitian_function(m, |v| if v > 0.0 { Float::sqrt(v) } else { 0.0 })
}

/// Moore-Penrose inverse of a Hermitian PSD matrix. Eigenvalues below
/// `rel_tol * lambda_max` are treated as zero.
pub fn pseudo_inverse_psd(m: &CMatrix, rel_tol: f64) -> CMatrix {
    let top = hermitian_spectral_norm(m);
    let cutoff = rel_tol * top;
    hermitian_function(m, |v| if v > cutoff && v > 0.0 { 1.0 / v } else { 0.0 })
}

/// Inverse of a Hermitian positive definite matrix via Cholesky.
/// Pivots below `1e-12` of the largest count as singular.
pub fn inverse_hpd(m: &CMatrix) -> Option<CMatrix> {
    let chol = Cholesky::new(hermitian_part(m))?;
    let pivots = chol.l_dirty().diagonal().map(|d| d.re * d.re);
    let largest = pivots.max();
    if pivots.min() <= 1e-12 * largest {
        return None;
    }
    Some(chol.inverse())
}

/// `(1/N) tr(M)`, real part.
pub fn normalized_trace(m: &CMatrix) -> f64 {
    m.trace().re / m.nrows() as f64
}

pub fn outer(a: &CVector, b: &CVector) -> CMatrix {
    a * b.adjoint()
}

pub fn abs2(z: C64) -> f64 {
    z.norm_sqr()
}

/// Real symmetric helper used by the derivative system.
pub fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .singular_values()
        .iter()
        .fold(f64::INFINITY, |acc, v| acc.min(*v))
}

pub fn modulus(z: C64) -> f64 {
    ComplexField::modulus(z)
}
