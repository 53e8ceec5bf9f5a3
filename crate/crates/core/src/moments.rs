//! Empirical moment estimators: per-row cross moments, the mean Gram
//! matrix, and outer-product variance matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// (1/m) * sum_i X_i * v_i, the sample mean of per-row products.
pub fn cross_moment_mean(x: &DMatrix<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, p) = x.shape();
    if m == 0 {
        return Err(Error::EmptyInput("cross_moment_mean".into()));
    }
    if v.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {m} rows but vector has {} entries",
            v.len()
        )));
    }
    let mut acc = DVector::zeros(p);
    for i in 0..m {
        for j in 0..p {
            acc[j] += x[(i, j)] * v[i];
        }
    }
    Ok(acc / m as f64)
}

/// (1/m) * sum_i X_i X_i^T = X^T X / m.
pub fn gram_mean(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = x.nrows();
    if m == 0 {
        return Err(Error::EmptyInput("gram_mean".into()));
    }
    Ok(x.transpose() * x / m as f64)
}

/// Mean outer product of a collection of vectors. With `centered` the
/// sample mean is subtracted first, yielding a covariance-style matrix;
/// without it the raw second moment is returned.
pub fn outer_moment(products: &[DVector<f64>], centered: bool) -> Result<DMatrix<f64>> {
    if products.is_empty() {
        return Err(Error::EmptyInput("outer_moment".into()));
    }
    if centered && products.len() < 2 {
        return Err(Error::InvalidParameter(
            "centered outer moment needs at least 2 vectors".into(),
        ));
    }
    let p = products[0].len();
    if products.iter().any(|v| v.len() != p) {
        return Err(Error::DimensionMismatch(
            "outer_moment vectors differ in length".into(),
        ));
    }
    let m = products.len() as f64;
    let center = if centered {
        products.iter().sum::<DVector<f64>>() / m
    } else {
        DVector::zeros(p)
    };
    let mut acc = DMatrix::zeros(p, p);
    for v in products {
        let d = v - &center;
        // symmetric rank-one update
        for a in 0..p {
            for b in a..p {
                acc[(a, b)] += d[a] * d[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            acc[(a, b)] = acc[(b, a)];
        }
    }
    Ok(acc / m)
}
