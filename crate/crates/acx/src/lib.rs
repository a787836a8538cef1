//! Numerical almost-complex geometry on coordinate patches.
//!
//! The library works on a patch of R^{2n} identified with C^n through
//! z_k = x_k + i y_k. Real tangent vectors are carried around in their
//! complex representation v = xi_x + i xi_y in C^n, so that the standard
//! structure J_0 acts as multiplication by i. A general almost complex
//! structure splits as J v = A v + conj(B) conj(v) with n x n complex
//! matrices A(z), B(z); A = iI and B = 0 exactly where J = J_0.
//!
//! Conventions used throughout (they fix every sign in the formulas):
//!   d/dz = (d/dx - i d/dy) / 2,   dzeta ^ dzetabar = -2i dA,
//! and the pairing H_J u(xi) = 2 sum_{k,l} M_{k,l} xi_k conj(xi_l) between
//! the almost-complex Hessian and the coefficient matrix M of i ddbar u.

pub mod acstruct;
pub mod cauchy;
pub mod cfields;
pub mod experiments;
pub mod forms;
pub mod hessian;
pub mod jdisks;
pub mod pshreg;
pub mod report;
pub mod scalar;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AcxError {
    /// A point or stencil left the declared patch.
    #[error("domain error: {0}")]
    Domain(String),
    /// An input violated a documented precondition or invariant.
    #[error("contract error: {0}")]
    Contract(String),
    /// A linear solve or iteration failed numerically.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// Malformed configuration input.
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, AcxError>;

pub type C64 = num_complex::Complex64;
pub type CMat = nalgebra::DMatrix<C64>;
pub type CVec = nalgebra::DVector<C64>;
pub type RMat = nalgebra::DMatrix<f64>;
pub type RVec = nalgebra::DVector<f64>;

/// Complex representation of the real vector with coordinates
/// (x_1..x_n, y_1..y_n).
pub fn complexify(v: &RVec) -> CVec {
    let n = v.len() / 2;
    CVec::from_fn(n, |k, _| C64::new(v[k], v[n + k]))
}

/// Inverse of [`complexify`].
pub fn realify(v: &CVec) -> RVec {
    let n = v.len();
    RVec::from_fn(2 * n, |a, _| if a < n { v[a].re } else { v[a - n].im })
}

/// Max absolute entry of a complex matrix.
pub fn cmat_norm_inf(m: &CMat) -> f64 {
    m.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Max absolute entry of a real matrix.
pub fn rmat_norm_inf(m: &RMat) -> f64 {
    m.iter().map(|c| c.abs()).fold(0.0, f64::max)
}

/// Least-squares slope of log(y) against log(x).
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.max(1e-300).ln()).collect();
    let m = lx.len() as f64;
    let sx: f64 = lx.iter().sum();
    let sy: f64 = ly.iter().sum();
    let sxx: f64 = lx.iter().map(|x| x * x).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| x * y).sum();
    (m * sxy - sx * sy) / (m * sxx - sx * sx)
}

/// Eigendecomposition of a Hermitian matrix, ascending eigenvalues with the
/// corresponding eigenvectors as columns.
pub fn hermitian_eigen_pairs(h: &CMat) -> Result<(Vec<f64>, CMat)> {
    let n = h.nrows();
    let asym = cmat_norm_inf(&(h - h.adjoint()));
    if asym > 1e-8 * (1.0 + cmat_norm_inf(h)) {
        return Err(AcxError::Contract(format!(
            "matrix is not Hermitian (asymmetry {asym:.3e})"
        )));
    }
    let sym = (h + h.adjoint()) * C64::new(0.5, 0.0);
    let se = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let vals: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let vecs = CMat::from_fn(n, n, |r, c| se.eigenvectors[(r, order[c])]);
    Ok((vals, vecs))
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigs(h: &CMat) -> Result<Vec<f64>> {
    hermitian_eigen_pairs(h).map(|(v, _)| v)
}
