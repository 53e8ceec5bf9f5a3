//! Dense least squares via Householder QR.
//!
//! Shared solver for the relationship model, the benchmark regressions,
//! and the pseudo-outcome regression. The Gram inverse is recovered from
//! the R factor rather than by forming normal equations, which matters
//! for the cubic-term designs whose columns span several orders of
//! magnitude.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot threshold below which a design column is treated as
/// linearly dependent on the preceding ones.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coefficients: DVector<f64>,
    pub residuals: DVector<f64>,
    pub residual_variance: f64,
    /// (X^T X)^{-1}, computed as R^{-1} R^{-T}.
    pub gram_inverse: DMatrix<f64>,
}

impl OlsFit {
    pub fn fitted(&self, x: &DMatrix<f64>) -> DVector<f64> {
        x * &self.coefficients
    }
}

/// Least-squares fit of `y` on the columns of `x`.
///
/// `variance_denominator` is caller-supplied because the degrees-of-freedom
/// convention differs between the places this solver is used (n-2 for the
/// relationship model, N-p for the naive prediction regression).
pub fn ols_fit(x: &DMatrix<f64>, y: &DVector<f64>, variance_denominator: usize) -> Result<OlsFit> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "design has {n} rows but response has {} entries",
            y.len()
        )));
    }
    if n <= p {
        return Err(Error::InvalidParameter(format!(
            "need more rows than columns: n = {n}, p = {p}"
        )));
    }
    if variance_denominator == 0 {
        return Err(Error::InvalidParameter(
            "variance denominator must be positive".into(),
        ));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design matrix".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("response vector".into()));
    }

    let qr = x.clone().qr();
    let r = qr.r();

    let max_pivot = (0..p).map(|k| r[(k, k)].abs()).fold(0.0_f64, f64::max);
    for k in 0..p {
        let pivot = r[(k, k)].abs();
        if pivot <= RANK_TOL * max_pivot {
            return Err(Error::RankDeficient { column: k, pivot });
        }
    }

    // beta solves R beta = Q^T y.
    let qty = qr.q().transpose() * y;
    let mut coefficients = qty;
    if !r.solve_upper_triangular_mut(&mut coefficients) {
        return Err(Error::RankDeficient {
            column: 0,
            pivot: 0.0,
        });
    }

    let residuals = y - x * &coefficients;
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let residual_variance = rss / variance_denominator as f64;

    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or(Error::RankDeficient {
            column: 0,
            pivot: 0.0,
        })?;
    let gram_inverse = &r_inv * r_inv.transpose();

    Ok(OlsFit {
        coefficients,
        residuals,
        residual_variance,
        gram_inverse,
    })
}
