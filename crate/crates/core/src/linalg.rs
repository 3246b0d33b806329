//! Dense solves backing the regression routines.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::{Error, Result};

pub(crate) fn to_dmatrix(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn to_dvector(a: ArrayView1<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len(), a.iter().copied())
}

/// Least squares `min ‖Xb − y‖` through a Householder QR of `X`.
///
/// Returns the coefficients and the diagonal of `(XᵀX)⁻¹`.
pub fn least_squares(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
    let (n, p) = x.dim();
    if n <= p {
        return Err(Error::Invalid(format!(
            "least squares needs more rows ({n}) than columns ({p})"
        )));
    }
    let qr = to_dmatrix(x).qr();
    let r = qr.r();
    let scale = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if p > 0 && (0..p).any(|i| r[(i, i)].abs() <= 1e-10 * scale.max(1e-300)) {
        return Err(Error::RankDeficient);
    }
    let qty = qr.q().transpose() * to_dvector(y);
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::RankDeficient)?;
    // (XᵀX)⁻¹ = R⁻¹ R⁻ᵀ; its diagonal is the row sums of squares of R⁻¹.
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or(Error::RankDeficient)?;
    let diag = Array1::from_iter((0..p).map(|i| r_inv.row(i).iter().map(|v| v * v).sum()));
    Ok((Array1::from_iter(beta.iter().copied()), diag))
}

/// Solves `A s = b` for symmetric positive definite `A`.
pub fn solve_spd(a: &Array2<f64>, b: &Array1<f64>, what: &'static str) -> Result<Array1<f64>> {
    let chol = to_dmatrix(a.view()).cholesky().ok_or(Error::Singular(what))?;
    let s = chol.solve(&to_dvector(b.view()));
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(what));
    }
    Ok(Array1::from_iter(s.iter().copied()))
}
