//! The five estimators and their standard errors: oracle, classical,
//! naive, the pseudo-outcome estimator with its two-component variance,
//! and the moment-corrected estimator with its sandwich variance.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::moments::{cross_moment_mean, gram_mean, outer_moment};
use crate::ols::ols_fit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Oracle,
    Classical,
    Naive,
    Postpi,
    Proposed,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Oracle,
        Method::Classical,
        Method::Naive,
        Method::Postpi,
        Method::Proposed,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Oracle => "oracle",
            Method::Classical => "classical",
            Method::Naive => "naive",
            Method::Postpi => "postpi",
            Method::Proposed => "proposed",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Method::Oracle),
            "classical" => Ok(Method::Classical),
            "naive" => Ok(Method::Naive),
            "postpi" => Ok(Method::Postpi),
            "proposed" => Ok(Method::Proposed),
            other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }
}

/// Labeled rows carry (y, x, f); unlabeled rows carry (x, f). The true
/// unlabeled outcomes are retained only by simulation generators so the
/// oracle benchmark can run.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x_labeled: DMatrix<f64>,
    pub y_labeled: DVector<f64>,
    pub f_labeled: DVector<f64>,
    pub x_unlabeled: DMatrix<f64>,
    pub f_unlabeled: DVector<f64>,
    pub y_unlabeled: Option<DVector<f64>>,
}

impl Dataset {
    pub fn new(
        x_labeled: DMatrix<f64>,
        y_labeled: DVector<f64>,
        f_labeled: DVector<f64>,
        x_unlabeled: DMatrix<f64>,
        f_unlabeled: DVector<f64>,
        y_unlabeled: Option<DVector<f64>>,
    ) -> Result<Self> {
        let n = x_labeled.nrows();
        let big_n = x_unlabeled.nrows();
        let p = x_labeled.ncols();
        if x_unlabeled.ncols() != p {
            return Err(Error::DimensionMismatch(
                "labeled and unlabeled designs differ in column count".into(),
            ));
        }
        if y_labeled.len() != n || f_labeled.len() != n {
            return Err(Error::DimensionMismatch(
                "labeled outcome/prediction length must match labeled design rows".into(),
            ));
        }
        if f_unlabeled.len() != big_n {
            return Err(Error::DimensionMismatch(
                "unlabeled prediction length must match unlabeled design rows".into(),
            ));
        }
        if let Some(y) = &y_unlabeled {
            if y.len() != big_n {
                return Err(Error::DimensionMismatch(
                    "unlabeled true outcome length must match unlabeled design rows".into(),
                ));
            }
        }
        if n < p + 2 {
            return Err(Error::InvalidParameter(format!(
                "labeled set needs at least p + 2 = {} rows, got {n}",
                p + 2
            )));
        }
        if big_n < p + 1 {
            return Err(Error::InvalidParameter(format!(
                "unlabeled set needs at least p + 1 = {} rows, got {big_n}",
                p + 1
            )));
        }
        let finite = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
        if !finite(&x_labeled) || !finite(&x_unlabeled) {
            return Err(Error::NonFinite("design matrix".into()));
        }
        if y_labeled.iter().any(|v| !v.is_finite())
            || f_labeled.iter().any(|v| !v.is_finite())
            || f_unlabeled.iter().any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("outcome or prediction column".into()));
        }
        Ok(Self {
            x_labeled,
            y_labeled,
            f_labeled,
            x_unlabeled,
            f_unlabeled,
            y_unlabeled,
        })
    }

    pub fn n(&self) -> usize {
        self.x_labeled.nrows()
    }

    pub fn big_n(&self) -> usize {
        self.x_unlabeled.nrows()
    }

    pub fn p(&self) -> usize {
        self.x_labeled.ncols()
    }
}

/// Prepend an explicit intercept column of ones.
pub fn design_with_intercept(covariates: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, q) = covariates.shape();
    DMatrix::from_fn(n, q + 1, |i, j| if j == 0 { 1.0 } else { covariates[(i, j - 1)] })
}

/// Simple regression of the observed outcome on its prediction.
#[derive(Debug, Clone)]
pub struct RelationshipFit {
    pub gamma0: f64,
    pub gamma1: f64,
    pub residuals: DVector<f64>,
    pub sigma_r_sq: f64,
}

pub fn fit_relationship(y: &DVector<f64>, f: &DVector<f64>) -> Result<RelationshipFit> {
    let n = y.len();
    if f.len() != n {
        return Err(Error::DimensionMismatch(
            "outcome and prediction lengths differ".into(),
        ));
    }
    if n < 3 {
        return Err(Error::InvalidParameter(
            "relationship model needs at least 3 labeled rows".into(),
        ));
    }
    let f_bar = f.mean();
    let s_ff: f64 = f.iter().map(|v| (v - f_bar) * (v - f_bar)).sum();
    let scale = f.iter().fold(0.0_f64, |a, v| a.max(v * v)).max(1.0);
    if s_ff <= 1e-12 * n as f64 * scale {
        return Err(Error::ConstantPredictions);
    }
    let design = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { f[i] });
    let fit = ols_fit(&design, y, n - 2)?;
    Ok(RelationshipFit {
        gamma0: fit.coefficients[0],
        gamma1: fit.coefficients[1],
        residuals: fit.residuals,
        sigma_r_sq: fit.residual_variance,
    })
}

/// Calibrated predictions gamma0 + gamma1 * f for the unlabeled rows.
pub fn pseudo_outcomes(fit: &RelationshipFit, f_unlabeled: &DVector<f64>) -> DVector<f64> {
    f_unlabeled.map(|f| fit.gamma0 + fit.gamma1 * f)
}

/// The empirical moments feeding the corrected estimator: cross moments,
/// the unlabeled Gram mean, and the two variance matrices of the sandwich.
#[derive(Debug, Clone)]
pub struct MomentSet {
    pub c_xf_u: DVector<f64>,
    pub c_xeta_l: DVector<f64>,
    pub m_xx_u: DMatrix<f64>,
    /// Centered second moment of X_i f_i over the unlabeled rows.
    pub s1_u: DMatrix<f64>,
    /// Uncentered second moment of X_j eta_j over the labeled rows.
    pub s2_l: DMatrix<f64>,
}

pub fn compute_moments(dataset: &Dataset, rel: &RelationshipFit) -> Result<MomentSet> {
    if rel.residuals.len() != dataset.n() {
        return Err(Error::DimensionMismatch(
            "relationship residuals do not align with the labeled rows".into(),
        ));
    }
    let c_xf_u = cross_moment_mean(&dataset.x_unlabeled, &dataset.f_unlabeled)?;
    let c_xeta_l = cross_moment_mean(&dataset.x_labeled, &rel.residuals)?;
    let m_xx_u = gram_mean(&dataset.x_unlabeled)?;

    let xf: Vec<DVector<f64>> = (0..dataset.big_n())
        .map(|i| dataset.x_unlabeled.row(i).transpose() * dataset.f_unlabeled[i])
        .collect();
    let xeta: Vec<DVector<f64>> = (0..dataset.n())
        .map(|j| dataset.x_labeled.row(j).transpose() * rel.residuals[j])
        .collect();
    let s1_u = outer_moment(&xf, true)?;
    let s2_l = outer_moment(&xeta, false)?;

    Ok(MomentSet {
        c_xf_u,
        c_xeta_l,
        m_xx_u,
        s1_u,
        s2_l,
    })
}

/// The two error variances entering the pseudo-outcome standard error.
#[derive(Debug, Clone, Copy)]
pub struct PostPiVarianceComponents {
    pub sigma_r_sq: f64,
    pub sigma_p_sq: f64,
    pub gamma1: f64,
}

impl PostPiVarianceComponents {
    pub fn scalar_variance(&self) -> f64 {
        self.sigma_r_sq + self.gamma1 * self.gamma1 * self.sigma_p_sq
    }
}

#[derive(Debug, Clone, Copy)]
pub struct InferenceOptions {
    pub alpha: f64,
    /// Small-sample t reference with n - 2 degrees of freedom instead of
    /// the normal reference.
    pub t_approx: bool,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            t_approx: false,
        }
    }
}

impl InferenceOptions {
    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub method: Method,
    pub beta: DVector<f64>,
    pub se: DVector<f64>,
    pub ci_low: DVector<f64>,
    pub ci_high: DVector<f64>,
    pub p_value: DVector<f64>,
    pub alpha: f64,
    pub n: usize,
    pub big_n: usize,
    pub covariance: DMatrix<f64>,
}

fn reference_quantile(alpha: f64, t_df: Option<f64>) -> f64 {
    match t_df {
        Some(df) => StudentsT::new(0.0, 1.0, df)
            .expect("valid t distribution")
            .inverse_cdf(1.0 - alpha / 2.0),
        None => Normal::standard().inverse_cdf(1.0 - alpha / 2.0),
    }
}

fn two_sided_p(stat: f64, t_df: Option<f64>) -> f64 {
    let tail = match t_df {
        Some(df) => {
            1.0 - StudentsT::new(0.0, 1.0, df)
                .expect("valid t distribution")
                .cdf(stat.abs())
        }
        None => 1.0 - Normal::standard().cdf(stat.abs()),
    };
    (2.0 * tail).clamp(0.0, 1.0)
}

fn interval_and_p(beta: f64, se: f64, alpha: f64, t_df: Option<f64>) -> (f64, f64, f64) {
    if se == 0.0 {
        let p = if beta == 0.0 { 1.0 } else { 0.0 };
        return (beta, beta, p);
    }
    let q = reference_quantile(alpha, t_df);
    (beta - q * se, beta + q * se, two_sided_p(beta / se, t_df))
}

/// Wald interval and two-sided p-value for a single coefficient under the
/// normal reference distribution.
pub fn wald_interval(beta_k: f64, se_k: f64, alpha: f64) -> Result<(f64, f64, f64)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if se_k < 0.0 {
        return Err(Error::InvalidParameter("standard error must be >= 0".into()));
    }
    Ok(interval_and_p(beta_k, se_k, alpha, None))
}

/// Wald interval for the linear contrast c' beta with variance c' V c.
pub fn contrast_inference(
    beta: &DVector<f64>,
    covariance: &DMatrix<f64>,
    c: &DVector<f64>,
    alpha: f64,
) -> Result<(f64, f64, f64)> {
    if c.len() != beta.len() || covariance.nrows() != beta.len() || covariance.ncols() != beta.len()
    {
        return Err(Error::DimensionMismatch(
            "contrast, estimate, and covariance dimensions disagree".into(),
        ));
    }
    if c.iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidParameter("contrast vector is zero".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let estimate = c.dot(beta);
    let var = (c.transpose() * covariance * c)[(0, 0)];
    if var < -1e-12 {
        return Err(Error::InvalidParameter(
            "contrast variance is negative; covariance is not PSD".into(),
        ));
    }
    let se = var.max(0.0).sqrt();
    let (low, high, _) = interval_and_p(estimate, se, alpha, None);
    Ok((estimate, low, high))
}

fn build_result(
    method: Method,
    beta: DVector<f64>,
    covariance: DMatrix<f64>,
    opts: &InferenceOptions,
    n: usize,
    big_n: usize,
    t_df: Option<f64>,
) -> Result<FitResult> {
    opts.validate()?;
    let p = beta.len();
    let df = if opts.t_approx { t_df } else { None };
    let mut se = DVector::zeros(p);
    let mut ci_low = DVector::zeros(p);
    let mut ci_high = DVector::zeros(p);
    let mut p_value = DVector::zeros(p);
    for k in 0..p {
        let var = covariance[(k, k)];
        if var < -1e-10 {
            return Err(Error::InvalidParameter(
                "negative variance on the covariance diagonal".into(),
            ));
        }
        se[k] = var.max(0.0).sqrt();
        let (lo, hi, pv) = interval_and_p(beta[k], se[k], opts.alpha, df);
        ci_low[k] = lo;
        ci_high[k] = hi;
        p_value[k] = pv;
    }
    Ok(FitResult {
        method,
        beta,
        se,
        ci_low,
        ci_high,
        p_value,
        alpha: opts.alpha,
        n,
        big_n,
        covariance,
    })
}

fn ols_inference(
    method: Method,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    opts: &InferenceOptions,
    n: usize,
    big_n: usize,
    t_df: f64,
) -> Result<FitResult> {
    let rows = x.nrows();
    let p = x.ncols();
    let fit = ols_fit(x, y, rows - p)?;
    let covariance = &fit.gram_inverse * fit.residual_variance;
    build_result(method, fit.coefficients, covariance, opts, n, big_n, Some(t_df))
}

/// OLS of the true unlabeled outcomes on the unlabeled design. Only
/// possible in simulation, where the generator retains the truth.
pub fn estimate_oracle(dataset: &Dataset, opts: &InferenceOptions) -> Result<FitResult> {
    let y = dataset
        .y_unlabeled
        .as_ref()
        .ok_or(Error::MissingTrueOutcomes)?;
    let df = (dataset.big_n() - dataset.p()) as f64;
    ols_inference(
        Method::Oracle,
        &dataset.x_unlabeled,
        y,
        opts,
        dataset.n(),
        dataset.big_n(),
        df,
    )
}

/// OLS of the labeled outcomes on the labeled design.
pub fn estimate_classical(dataset: &Dataset, opts: &InferenceOptions) -> Result<FitResult> {
    let df = (dataset.n() - dataset.p()) as f64;
    ols_inference(
        Method::Classical,
        &dataset.x_labeled,
        &dataset.y_labeled,
        opts,
        dataset.n(),
        dataset.big_n(),
        df,
    )
}

/// OLS that treats the predictions as observed outcomes.
pub fn estimate_naive(dataset: &Dataset, opts: &InferenceOptions) -> Result<FitResult> {
    let df = (dataset.big_n() - dataset.p()) as f64;
    ols_inference(
        Method::Naive,
        &dataset.x_unlabeled,
        &dataset.f_unlabeled,
        opts,
        dataset.n(),
        dataset.big_n(),
        df,
    )
}

/// Pseudo-outcome regression with the two-component scalar variance.
/// The sigma_r^2 contribution rides on the unlabeled precision matrix, so
/// it vanishes as N grows; this is deliberate so the contrast with the
/// sandwich variance stays faithful.
pub fn estimate_postpi(
    dataset: &Dataset,
    rel: &RelationshipFit,
    opts: &InferenceOptions,
) -> Result<FitResult> {
    let big_n = dataset.big_n();
    let p = dataset.p();
    let ystar = pseudo_outcomes(rel, &dataset.f_unlabeled);
    let fit = ols_fit(&dataset.x_unlabeled, &ystar, big_n - p)?;
    let prediction_fit = ols_fit(&dataset.x_unlabeled, &dataset.f_unlabeled, big_n - p)?;
    let components = PostPiVarianceComponents {
        sigma_r_sq: rel.sigma_r_sq,
        sigma_p_sq: prediction_fit.residual_variance,
        gamma1: rel.gamma1,
    };
    let covariance = &fit.gram_inverse * components.scalar_variance();
    build_result(
        Method::Postpi,
        fit.coefficients,
        covariance,
        opts,
        dataset.n(),
        big_n,
        Some((dataset.n() - 2) as f64),
    )
}

/// Moment-corrected point estimate with the N/n-scaled sandwich variance.
pub fn estimate_proposed(
    dataset: &Dataset,
    rel: &RelationshipFit,
    opts: &InferenceOptions,
) -> Result<FitResult> {
    let moments = compute_moments(dataset, rel)?;
    estimate_proposed_from_moments(dataset, rel, &moments, opts)
}

pub fn estimate_proposed_from_moments(
    dataset: &Dataset,
    rel: &RelationshipFit,
    moments: &MomentSet,
    opts: &InferenceOptions,
) -> Result<FitResult> {
    let n = dataset.n() as f64;
    let big_n = dataset.big_n() as f64;
    let chol = Cholesky::new(moments.m_xx_u.clone()).ok_or(Error::RankDeficient {
        column: 0,
        pivot: 0.0,
    })?;
    let m_inv = chol.inverse();
    let beta = &m_inv * (&moments.c_xf_u * rel.gamma1 + &moments.c_xeta_l);
    let meat = &moments.s1_u * (rel.gamma1 * rel.gamma1) + &moments.s2_l * (big_n / n);
    let covariance = (&m_inv * meat * &m_inv) / big_n;
    build_result(
        Method::Proposed,
        beta,
        covariance,
        opts,
        dataset.n(),
        dataset.big_n(),
        Some((dataset.n() - 2) as f64),
    )
}

/// Run one estimator by tag.
pub fn estimate(
    method: Method,
    dataset: &Dataset,
    rel: &RelationshipFit,
    opts: &InferenceOptions,
) -> Result<FitResult> {
    match method {
        Method::Oracle => estimate_oracle(dataset, opts),
        Method::Classical => estimate_classical(dataset, opts),
        Method::Naive => estimate_naive(dataset, opts),
        Method::Postpi => estimate_postpi(dataset, rel, opts),
        Method::Proposed => estimate_proposed(dataset, rel, opts),
    }
}
