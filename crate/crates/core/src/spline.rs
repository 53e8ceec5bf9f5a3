//! Natural cubic spline basis and the additive least-squares smoother
//! built on it. Natural boundary conditions make every basis function
//! linear beyond the boundary knots, so extrapolation is affine.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ols::{ols_fit, OlsFit};

#[derive(Debug, Clone, Copy)]
pub struct SplineAdditiveConfig {
    /// Interior knots per covariate, placed at equally spaced quantiles
    /// of the training column. Boundary knots sit at the column extremes.
    pub interior_knots: usize,
    /// Fixed ridge penalty on the curvature basis coefficients (the
    /// intercept and per-covariate linear terms are never penalized, so
    /// affine fits stay exact). Expressed per unit of column variance, so
    /// 0 recovers plain least squares and 1 roughly halves the curvature
    /// contribution of a weak signal.
    pub curvature_penalty: f64,
}

impl Default for SplineAdditiveConfig {
    fn default() -> Self {
        Self {
            interior_knots: 10,
            curvature_penalty: 4.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SplineAdditiveModel {
    knots: Vec<Vec<f64>>,
    coefficients: DVector<f64>,
    fitted: DVector<f64>,
}

impl SplineAdditiveModel {
    pub fn n_covariates(&self) -> usize {
        self.knots.len()
    }

    pub fn in_sample_fitted(&self) -> &DVector<f64> {
        &self.fitted
    }

    pub fn predict(&self, z: &DMatrix<f64>) -> Result<DVector<f64>> {
        if z.ncols() != self.knots.len() {
            return Err(Error::DimensionMismatch(format!(
                "model was trained on {} covariates, got {}",
                self.knots.len(),
                z.ncols()
            )));
        }
        let design = build_design(z, &self.knots);
        Ok(design * &self.coefficients)
    }

    /// Analytic prediction slope in covariate `j` beyond its upper
    /// boundary knot, where every basis function is linear.
    pub fn upper_extrapolation_slope(&self, j: usize) -> f64 {
        let mut offset = 1; // skip the global intercept
        for knots in &self.knots[..j] {
            offset += basis_width(knots);
        }
        let knots = &self.knots[j];
        let big_k = knots.len();
        let mut slope = self.coefficients[offset]; // linear term
        for k in 0..big_k.saturating_sub(2) {
            slope += self.coefficients[offset + 1 + k] * 3.0 * (knots[big_k - 2] - knots[k]);
        }
        slope
    }
}

fn basis_width(knots: &[f64]) -> usize {
    // linear term plus one function per interior knot
    1 + knots.len().saturating_sub(2)
}

/// Equally spaced quantile knots including the boundary extremes.
fn quantile_knots(column: &[f64], interior: usize) -> Result<Vec<f64>> {
    let mut sorted = column.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite training covariate"));
    let n = sorted.len();
    let lo = sorted[0];
    let hi = sorted[n - 1];
    if hi <= lo {
        return Err(Error::InvalidParameter(
            "training covariate is constant; cannot place spline knots".into(),
        ));
    }
    let mut knots = Vec::with_capacity(interior + 2);
    knots.push(lo);
    for j in 1..=interior {
        let q = j as f64 / (interior + 1) as f64;
        let pos = q * (n - 1) as f64;
        let idx = pos.floor() as usize;
        let frac = pos - idx as f64;
        let v = if idx + 1 < n {
            sorted[idx] * (1.0 - frac) + sorted[idx + 1] * frac
        } else {
            sorted[idx]
        };
        knots.push(v);
    }
    knots.push(hi);
    knots.dedup_by(|a, b| *a == *b);
    Ok(knots)
}

fn truncated_cube(x: f64) -> f64 {
    if x > 0.0 {
        x * x * x
    } else {
        0.0
    }
}

/// Natural-spline basis functions for one covariate, excluding the constant.
fn eval_basis(x: f64, knots: &[f64], out: &mut [f64]) {
    let big_k = knots.len();
    out[0] = x;
    if big_k < 3 {
        return;
    }
    let xi_last = knots[big_k - 1];
    let d = |k: usize| -> f64 {
        (truncated_cube(x - knots[k]) - truncated_cube(x - xi_last)) / (xi_last - knots[k])
    };
    let d_penult = d(big_k - 2);
    for k in 0..big_k - 2 {
        out[1 + k] = d(k) - d_penult;
    }
}

fn build_design(z: &DMatrix<f64>, knots: &[Vec<f64>]) -> DMatrix<f64> {
    let n = z.nrows();
    let dim = 1 + knots.iter().map(|k| basis_width(k)).sum::<usize>();
    let mut design = DMatrix::zeros(n, dim);
    let mut scratch = vec![0.0; knots.iter().map(|k| basis_width(k)).max().unwrap_or(1)];
    for i in 0..n {
        design[(i, 0)] = 1.0;
        let mut col = 1;
        for (j, kj) in knots.iter().enumerate() {
            let w = basis_width(kj);
            eval_basis(z[(i, j)], kj, &mut scratch[..w]);
            for (t, v) in scratch[..w].iter().enumerate() {
                design[(i, col + t)] = *v;
            }
            col += w;
        }
    }
    design
}

/// Ridge regression on the curvature columns only, solved as least
/// squares on the row-augmented system. The penalty for column `j` is
/// `lambda * n * var(B_j) * theta_j^2`, making `lambda` dimensionless.
fn penalized_fit(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
    knots: &[Vec<f64>],
    lambda: f64,
) -> Result<OlsFit> {
    let (n, dim) = design.shape();
    // column indices of the curvature terms: skip the global intercept
    // and the first (linear) column of each covariate block
    let mut curvature = Vec::new();
    let mut col = 1;
    for kj in knots {
        let w = basis_width(kj);
        curvature.extend(col + 1..col + w);
        col += w;
    }
    let mut aug = DMatrix::zeros(n + curvature.len(), dim);
    aug.rows_mut(0, n).copy_from(design);
    let mut aug_y = DVector::zeros(n + curvature.len());
    aug_y.rows_mut(0, n).copy_from(y);
    for (r, &j) in curvature.iter().enumerate() {
        let mean = design.column(j).mean();
        let var =
            design.column(j).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        aug[(n + r, j)] = (lambda * n as f64 * var).sqrt();
    }
    ols_fit(&aug, &aug_y, n.saturating_sub(dim).max(1))
}

pub fn train_spline_additive(
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    config: &SplineAdditiveConfig,
) -> Result<SplineAdditiveModel> {
    let (n, q) = z.shape();
    if q == 0 {
        return Err(Error::EmptyInput("no covariates to expand".into()));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "covariates have {n} rows but response has {} entries",
            y.len()
        )));
    }
    let knots: Vec<Vec<f64>> = (0..q)
        .map(|j| {
            let col: Vec<f64> = z.column(j).iter().copied().collect();
            quantile_knots(&col, config.interior_knots)
        })
        .collect::<Result<_>>()?;
    let dim = 1 + knots.iter().map(|k| basis_width(k)).sum::<usize>();
    if n <= dim {
        return Err(Error::InvalidParameter(format!(
            "basis dimension {dim} requires more than {dim} training rows, got {n}"
        )));
    }
    if !(config.curvature_penalty.is_finite() && config.curvature_penalty >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "curvature penalty must be finite and non-negative, got {}",
            config.curvature_penalty
        )));
    }
    let design = build_design(z, &knots);
    let fit: OlsFit = if config.curvature_penalty > 0.0 {
        penalized_fit(&design, y, &knots, config.curvature_penalty)?
    } else {
        ols_fit(&design, y, n - dim)?
    };
    let fitted = design * &fit.coefficients;
    Ok(SplineAdditiveModel {
        knots,
        coefficients: fit.coefficients,
        fitted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{sample_standard_normal, RngSeed};
    use approx::assert_abs_diff_eq;

    fn config(k: usize) -> SplineAdditiveConfig {
        // exactness-oriented tests probe the basis itself, unpenalized
        SplineAdditiveConfig {
            interior_knots: k,
            curvature_penalty: 0.0,
        }
    }

    #[test]
    fn constant_target_reproduced() {
        let z = DMatrix::from_fn(50, 1, |i, _| i as f64 / 10.0);
        let y = DVector::from_element(50, 3.0);
        let model = train_spline_additive(&z, &y, &config(5)).unwrap();
        let pred = model.predict(&z).unwrap();
        assert!(pred.iter().all(|p| (p - 3.0).abs() < 1e-8));
    }

    #[test]
    fn affine_target_nested_for_any_knot_count() {
        let z1 = sample_standard_normal(RngSeed::new(8, 0), 100);
        let z = DMatrix::from_fn(100, 1, |i, _| z1[i]);
        let y = DVector::from_fn(100, |i, _| 2.0 * z1[i]);
        for k in [0, 3, 10] {
            let model = train_spline_additive(&z, &y, &config(k)).unwrap();
            let pred = model.predict(&z).unwrap();
            for i in 0..100 {
                assert_abs_diff_eq!(pred[i], 2.0 * z1[i], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn cubic_signal_beats_variance_floor() {
        let n = 500;
        let z1 = sample_standard_normal(RngSeed::new(21, 0), n);
        let noise = sample_standard_normal(RngSeed::new(21, 1), n);
        let z = DMatrix::from_fn(n, 1, |i, _| z1[i]);
        let y = DVector::from_fn(n, |i, _| 3.0 * z1[i].powi(3) + 0.1 * noise[i]);
        let model = train_spline_additive(&z, &y, &config(10)).unwrap();

        // out-of-sample draws
        let m = 2000;
        let z1_new = sample_standard_normal(RngSeed::new(21, 2), m);
        let e_new = sample_standard_normal(RngSeed::new(21, 3), m);
        let z_new = DMatrix::from_fn(m, 1, |i, _| z1_new[i]);
        let y_new = DVector::from_fn(m, |i, _| 3.0 * z1_new[i].powi(3) + 0.1 * e_new[i]);
        let pred = model.predict(&z_new).unwrap();
        let mse: f64 = (0..m).map(|i| (pred[i] - y_new[i]).powi(2)).sum::<f64>() / m as f64;
        let ybar = y_new.mean();
        let var_y: f64 = y_new.iter().map(|v| (v - ybar).powi(2)).sum::<f64>() / (m - 1) as f64;
        assert!(mse < 0.05 * var_y, "mse {mse}, var {var_y}");

        // brute-force degree-3 polynomial least squares as an independent
        // reference: the spline should not do much worse where both apply.
        let design = DMatrix::from_fn(n, 4, |i, j| z1[i].powi(j as i32));
        let poly = crate::ols::ols_fit(&design, &y, n - 4).unwrap();
        let poly_pred = DMatrix::from_fn(m, 4, |i, j| z1_new[i].powi(j as i32)) * poly.coefficients;
        let poly_mse: f64 =
            (0..m).map(|i| (poly_pred[i] - y_new[i]).powi(2)).sum::<f64>() / m as f64;
        assert!(mse < 20.0 * poly_mse + 0.05 * var_y, "spline {mse} vs poly {poly_mse}");
    }

    #[test]
    fn in_sample_predictions_match_stored_fitted_values() {
        let z1 = sample_standard_normal(RngSeed::new(4, 0), 80);
        let z = DMatrix::from_fn(80, 1, |i, _| z1[i]);
        let y = DVector::from_fn(80, |i, _| z1[i].sin());
        let model = train_spline_additive(&z, &y, &config(6)).unwrap();
        let pred = model.predict(&z).unwrap();
        for i in 0..80 {
            assert_abs_diff_eq!(pred[i], model.in_sample_fitted()[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn extrapolation_is_affine_with_analytic_slope() {
        let z1 = sample_standard_normal(RngSeed::new(13, 0), 200);
        let z = DMatrix::from_fn(200, 1, |i, _| z1[i]);
        let y = DVector::from_fn(200, |i, _| z1[i].powi(2) + 0.5 * z1[i]);
        let model = train_spline_additive(&z, &y, &config(8)).unwrap();

        let hi = z1.iter().fold(f64::MIN, |a, b| a.max(*b));
        let probe = DMatrix::from_fn(3, 1, |i, _| hi + 5.0 + 3.0 * i as f64);
        let pred = model.predict(&probe).unwrap();
        let slope1 = (pred[1] - pred[0]) / 3.0;
        let slope2 = (pred[2] - pred[1]) / 3.0;
        // affine beyond the boundary
        assert_abs_diff_eq!(slope1, slope2, epsilon = 1e-7);
        // matches the analytic boundary derivative
        assert_abs_diff_eq!(slope1, model.upper_extrapolation_slope(0), epsilon = 1e-6);
    }

    #[test]
    fn default_penalty_shrinks_curvature_but_not_affine_fits() {
        let n = 500;
        let z1 = sample_standard_normal(RngSeed::new(33, 0), n);
        let z = DMatrix::from_fn(n, 1, |i, _| z1[i]);
        let y = DVector::from_fn(n, |i, _| 3.0 * z1[i].powi(3));
        let plain = train_spline_additive(&z, &y, &config(10)).unwrap();
        let smooth = train_spline_additive(&z, &y, &SplineAdditiveConfig::default()).unwrap();
        let var = |v: &DVector<f64>| {
            let m = v.mean();
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
        };
        // penalization pulls variance out of the curved fit...
        assert!(var(smooth.in_sample_fitted()) < 0.95 * var(plain.in_sample_fitted()));
        // ...but leaves affine targets untouched
        let y_lin = DVector::from_fn(n, |i, _| 2.0 * z1[i] - 1.0);
        let lin = train_spline_additive(&z, &y_lin, &SplineAdditiveConfig::default()).unwrap();
        let pred = lin.predict(&z).unwrap();
        for i in 0..n {
            assert_abs_diff_eq!(pred[i], 2.0 * z1[i] - 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn negative_penalty_rejected() {
        let z = DMatrix::from_fn(50, 1, |i, _| i as f64 / 10.0);
        let y = DVector::zeros(50);
        let bad = SplineAdditiveConfig {
            interior_knots: 3,
            curvature_penalty: -1.0,
        };
        assert!(train_spline_additive(&z, &y, &bad).is_err());
    }

    #[test]
    fn too_many_knots_for_sample_size_rejected() {
        let z = DMatrix::from_fn(12, 1, |i, _| i as f64);
        let y = DVector::zeros(12);
        assert!(train_spline_additive(&z, &y, &config(20)).is_err());
    }
}
