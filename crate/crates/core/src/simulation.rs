//! Data generators for the three simulation settings, the seeded Monte
//! Carlo engine, and metric aggregation.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    design_with_intercept, estimate, fit_relationship, Dataset, FitResult, InferenceOptions,
    Method,
};
use crate::forest::RandomForestConfig;
use crate::predictors::PredictionModel;
use crate::rng::{sample_bivariate_normal, sample_standard_normal, RngSeed};
use crate::spline::SplineAdditiveConfig;

/// One simulation scenario: sample allocation, effect size, and noise.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimSetting {
    pub setting_id: u8,
    pub n_t: usize,
    pub n: usize,
    pub big_n: usize,
    pub beta1: f64,
    pub noise_sd: f64,
    /// Correlation of the two covariates (setting 3 only).
    pub rho: f64,
}

impl SimSetting {
    /// Default allocations: setting 1 uses (500, 500, 500) and noise sd 2;
    /// settings 2 and 3 use (500, 500, 1000) with noise sd 2 and 1.
    pub fn defaults(setting_id: u8, beta1: f64) -> Result<Self> {
        match setting_id {
            1 => Ok(Self {
                setting_id,
                n_t: 500,
                n: 500,
                big_n: 500,
                beta1,
                noise_sd: 2.0,
                rho: 0.0,
            }),
            2 => Ok(Self {
                setting_id,
                n_t: 500,
                n: 500,
                big_n: 1000,
                beta1,
                noise_sd: 2.0,
                rho: 0.0,
            }),
            3 => Ok(Self {
                setting_id,
                n_t: 500,
                n: 500,
                big_n: 1000,
                beta1,
                noise_sd: 1.0,
                rho: 0.5,
            }),
            other => Err(Error::InvalidParameter(format!(
                "setting must be 1, 2, or 3, got {other}"
            ))),
        }
    }

    pub fn n_covariates(&self) -> usize {
        if self.setting_id == 3 {
            2
        } else {
            4
        }
    }

    /// Covariates entering the downstream inferential design (after the
    /// intercept). Settings 1-2 regress on Z1 alone; setting 3's outcome
    /// is exactly linear in (Z1, Z2), so both enter and the Z1 slope is
    /// identified despite the correlation.
    pub fn inferential_covariates(&self) -> usize {
        if self.setting_id == 3 {
            2
        } else {
            1
        }
    }

    /// Features visible to the upstream prediction model. In setting 3
    /// the model sees only Z1, so its error carries the Z2 structure the
    /// inferential design cares about; settings 1-2 expose all four.
    pub fn predictor_features(&self) -> usize {
        if self.setting_id == 3 {
            1
        } else {
            4
        }
    }

    pub fn conditional_mean(&self, z_row: &[f64]) -> f64 {
        if self.setting_id == 3 {
            setting3_mean(z_row, self.beta1)
        } else {
            setting12_mean(z_row, self.beta1)
        }
    }

    /// E[Y | Z1] alone: the best prediction available to a model that
    /// never sees the remaining covariates.
    pub fn target_only_mean(&self, z1: f64) -> f64 {
        if self.setting_id == 3 {
            (self.beta1 + self.rho) * z1
        } else {
            // E[3 Z3^3] = 0 and E[4 Z4^2] = 4
            self.beta1 * z1 + 4.0
        }
    }
}

/// Raw generated split: covariates and the true outcome.
#[derive(Debug, Clone)]
pub struct RawSample {
    pub z: DMatrix<f64>,
    pub y: DVector<f64>,
}

pub fn setting12_mean(z_row: &[f64], beta1: f64) -> f64 {
    beta1 * z_row[0] + 0.5 * z_row[1] + 3.0 * z_row[2].powi(3) + 4.0 * z_row[3].powi(2)
}

pub fn setting3_mean(z_row: &[f64], beta1: f64) -> f64 {
    beta1 * z_row[0] + z_row[1]
}

fn draw_split_setting12(rng: &mut impl rand::Rng, m: usize, beta1: f64, noise_sd: f64) -> RawSample {
    let mut z = DMatrix::zeros(m, 4);
    let mut y = DVector::zeros(m);
    let mut row = [0.0; 4];
    for i in 0..m {
        for item in &mut row {
            *item = StandardNormal.sample(rng);
        }
        for j in 0..4 {
            z[(i, j)] = row[j];
        }
        let eps: f64 = StandardNormal.sample(rng);
        y[i] = setting12_mean(&row, beta1) + noise_sd * eps;
    }
    RawSample { z, y }
}

/// Four iid standard normal covariates; outcome linear in Z1 and
/// nonlinear in the rest, with N(0, noise_sd^2) error.
pub fn generate_setting12(
    seed: RngSeed,
    counts: (usize, usize, usize),
    beta1: f64,
    noise_sd: f64,
) -> (RawSample, RawSample, RawSample) {
    let mut rng = seed.rng();
    let train = draw_split_setting12(&mut rng, counts.0, beta1, noise_sd);
    let labeled = draw_split_setting12(&mut rng, counts.1, beta1, noise_sd);
    let unlabeled = draw_split_setting12(&mut rng, counts.2, beta1, noise_sd);
    (train, labeled, unlabeled)
}

fn draw_split_setting3(
    seed: RngSeed,
    m: usize,
    beta1: f64,
    noise_sd: f64,
    rho: f64,
) -> Result<RawSample> {
    let z = sample_bivariate_normal(seed, m, rho)?;
    let eps = sample_standard_normal(seed.child(0xE), m);
    let y = DVector::from_fn(m, |i, _| {
        setting3_mean(&[z[(i, 0)], z[(i, 1)]], beta1) + noise_sd * eps[i]
    });
    Ok(RawSample { z, y })
}

/// Correlated bivariate normal covariates with a linear outcome.
pub fn generate_setting3(
    seed: RngSeed,
    counts: (usize, usize, usize),
    beta1: f64,
    noise_sd: f64,
    rho: f64,
) -> Result<(RawSample, RawSample, RawSample)> {
    let train = draw_split_setting3(seed.child(0), counts.0, beta1, noise_sd, rho)?;
    let labeled = draw_split_setting3(seed.child(1), counts.1, beta1, noise_sd, rho)?;
    let unlabeled = draw_split_setting3(seed.child(2), counts.2, beta1, noise_sd, rho)?;
    Ok((train, labeled, unlabeled))
}

/// Which upstream model produces the predictions for a replicate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum PredictorSpec {
    SplineAdditive {
        interior_knots: usize,
        curvature_penalty: f64,
    },
    RandomForest {
        n_trees: usize,
        min_leaf: usize,
        bootstrap: bool,
    },
    /// Test hook that bypasses training: f is the true conditional mean
    /// plus independent N(0, noise_sd^2) noise.
    TrueMeanPlusNoise { noise_sd: f64 },
    /// Test hook: f is E[Y | Z1] plus independent noise, a fixed predictor
    /// whose error is correlated with the inferential design.
    TargetOnlyMeanPlusNoise { noise_sd: f64 },
}

impl PredictorSpec {
    /// Settings 1-2 use the additive spline smoother; setting 3 the forest.
    pub fn default_for(setting_id: u8) -> Self {
        if setting_id == 3 {
            PredictorSpec::RandomForest {
                n_trees: 100,
                min_leaf: 5,
                bootstrap: true,
            }
        } else {
            PredictorSpec::SplineAdditive {
                interior_knots: 10,
                curvature_penalty: SplineAdditiveConfig::default().curvature_penalty,
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct MonteCarloConfig {
    pub setting: SimSetting,
    pub n_reps: usize,
    pub base_seed: u64,
    pub methods: Vec<Method>,
    pub alpha: f64,
    pub t_approx: bool,
    pub predictor: PredictorSpec,
}

impl MonteCarloConfig {
    pub fn new(setting: SimSetting, n_reps: usize, base_seed: u64) -> Self {
        Self {
            predictor: PredictorSpec::default_for(setting.setting_id),
            setting,
            n_reps,
            base_seed,
            methods: Method::ALL.to_vec(),
            alpha: 0.05,
            t_approx: false,
        }
    }
}

/// Target-coefficient slice of a FitResult, one per method per replicate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CoefficientSummary {
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
}

impl CoefficientSummary {
    fn from_fit(fit: &FitResult, k: usize) -> Self {
        Self {
            estimate: fit.beta[k],
            se: fit.se[k],
            ci_low: fit.ci_low[k],
            ci_high: fit.ci_high[k],
            p_value: fit.p_value[k],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub rep_index: usize,
    pub base_seed: u64,
    pub results: Vec<(Method, std::result::Result<CoefficientSummary, String>)>,
}

/// Aggregated Monte Carlo metrics for one (setting, beta1, method) cell.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricsRow {
    pub setting_id: u8,
    pub n_t: usize,
    pub n: usize,
    pub big_n: usize,
    pub beta1: f64,
    pub method: Method,
    pub bias: f64,
    pub mse: f64,
    pub mean_ci_width: f64,
    pub coverage: f64,
    pub rejection_rate: f64,
    pub n_reps: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone)]
pub struct MonteCarloResult {
    pub rows: Vec<MetricsRow>,
    pub replicates: Vec<ReplicateRecord>,
}

/// Generate, train, predict, and estimate one replicate. Deterministic in
/// (base_seed, rep_index); estimator failures are recorded per method
/// rather than aborting the replicate.
pub fn run_replicate(config: &MonteCarloConfig, rep_index: usize) -> Result<ReplicateRecord> {
    let setting = &config.setting;
    let seed = RngSeed::new(config.base_seed, rep_index as u64);
    let counts = (setting.n_t, setting.n, setting.big_n);

    let (train, labeled, unlabeled) = if setting.setting_id == 3 {
        generate_setting3(seed.child(10), counts, setting.beta1, setting.noise_sd, setting.rho)?
    } else {
        let (a, b, c) = generate_setting12(seed.child(10), counts, setting.beta1, setting.noise_sd);
        (a, b, c)
    };

    // Features the upstream model is allowed to see (setting 3: Z1 only).
    let q = setting.predictor_features();
    let feat = |z: &DMatrix<f64>| z.columns(0, q).into_owned();

    let (f_labeled, f_unlabeled) = match &config.predictor {
        PredictorSpec::SplineAdditive {
            interior_knots,
            curvature_penalty,
        } => {
            let cfg = SplineAdditiveConfig {
                interior_knots: *interior_knots,
                curvature_penalty: *curvature_penalty,
            };
            let model = PredictionModel::train_spline_additive(&feat(&train.z), &train.y, &cfg)?;
            (
                model.predict(&feat(&labeled.z))?,
                model.predict(&feat(&unlabeled.z))?,
            )
        }
        PredictorSpec::RandomForest {
            n_trees,
            min_leaf,
            bootstrap,
        } => {
            let cfg = RandomForestConfig {
                n_trees: *n_trees,
                min_leaf: *min_leaf,
                mtry: (q / 3).max(1),
                bootstrap: *bootstrap,
                seed: seed.child(20),
            };
            let model = PredictionModel::train_random_forest(&feat(&train.z), &train.y, &cfg)?;
            (
                model.predict(&feat(&labeled.z))?,
                model.predict(&feat(&unlabeled.z))?,
            )
        }
        PredictorSpec::TrueMeanPlusNoise { noise_sd } => {
            let mut rng = seed.child(30).rng();
            let mut with_noise = |z: &DMatrix<f64>| {
                DVector::from_fn(z.nrows(), |i, _| {
                    let row: Vec<f64> = z.row(i).iter().copied().collect();
                    let eps: f64 = StandardNormal.sample(&mut rng);
                    setting.conditional_mean(&row) + noise_sd * eps
                })
            };
            let f_l = with_noise(&labeled.z);
            let f_u = with_noise(&unlabeled.z);
            (f_l, f_u)
        }
        PredictorSpec::TargetOnlyMeanPlusNoise { noise_sd } => {
            let mut rng = seed.child(30).rng();
            let mut with_noise = |z: &DMatrix<f64>| {
                DVector::from_fn(z.nrows(), |i, _| {
                    let eps: f64 = StandardNormal.sample(&mut rng);
                    setting.target_only_mean(z[(i, 0)]) + noise_sd * eps
                })
            };
            let f_l = with_noise(&labeled.z);
            let f_u = with_noise(&unlabeled.z);
            (f_l, f_u)
        }
    };

    // Inferential design: intercept plus the target covariate Z1, and in
    // setting 3 also Z2 so the correlated covariate is adjusted for.
    let d = setting.inferential_covariates();
    let x_labeled = design_with_intercept(&labeled.z.columns(0, d).into_owned());
    let x_unlabeled = design_with_intercept(&unlabeled.z.columns(0, d).into_owned());
    let dataset = Dataset::new(
        x_labeled,
        labeled.y.clone(),
        f_labeled,
        x_unlabeled,
        f_unlabeled,
        Some(unlabeled.y.clone()),
    )?;
    let rel = fit_relationship(&dataset.y_labeled, &dataset.f_labeled)?;

    let opts = InferenceOptions {
        alpha: config.alpha,
        t_approx: config.t_approx,
    };
    let results = config
        .methods
        .iter()
        .map(|&method| {
            let outcome = estimate(method, &dataset, &rel, &opts)
                .map(|fit| CoefficientSummary::from_fit(&fit, 1))
                .map_err(|e| e.to_string());
            (method, outcome)
        })
        .collect();

    Ok(ReplicateRecord {
        rep_index,
        base_seed: config.base_seed,
        results,
    })
}

/// Fold a stream of per-replicate summaries into one metrics row.
pub fn aggregate_metrics(
    setting: &SimSetting,
    method: Method,
    alpha: f64,
    summaries: &[CoefficientSummary],
    n_failed: usize,
) -> Result<MetricsRow> {
    if summaries.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no successful replicates for {method}"
        )));
    }
    let m = summaries.len() as f64;
    let beta1 = setting.beta1;
    let bias = summaries.iter().map(|s| s.estimate - beta1).sum::<f64>() / m;
    let mse = summaries
        .iter()
        .map(|s| (s.estimate - beta1).powi(2))
        .sum::<f64>()
        / m;
    let mean_ci_width = summaries.iter().map(|s| s.ci_high - s.ci_low).sum::<f64>() / m;
    let coverage = summaries
        .iter()
        .filter(|s| s.ci_low <= beta1 && beta1 <= s.ci_high)
        .count() as f64
        / m;
    let rejection_rate = summaries.iter().filter(|s| s.p_value < alpha).count() as f64 / m;
    Ok(MetricsRow {
        setting_id: setting.setting_id,
        n_t: setting.n_t,
        n: setting.n,
        big_n: setting.big_n,
        beta1,
        method,
        bias,
        mse,
        mean_ci_width,
        coverage,
        rejection_rate,
        n_reps: summaries.len(),
        n_failed,
    })
}

pub fn run_monte_carlo(config: &MonteCarloConfig) -> Result<MonteCarloResult> {
    if config.n_reps == 0 {
        return Err(Error::InvalidParameter(
            "Monte Carlo needs at least 1 replicate".into(),
        ));
    }
    let replicates: Vec<ReplicateRecord> = (0..config.n_reps)
        .map(|rep| run_replicate(config, rep))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let mut summaries = Vec::with_capacity(config.n_reps);
        let mut n_failed = 0;
        for rec in &replicates {
            match rec.results.iter().find(|(m, _)| *m == method) {
                Some((_, Ok(s))) => summaries.push(*s),
                Some((_, Err(_))) => n_failed += 1,
                None => {}
            }
        }
        rows.push(aggregate_metrics(
            &config.setting,
            method,
            config.alpha,
            &summaries,
            n_failed,
        )?);
    }
    Ok(MonteCarloResult { rows, replicates })
}

/// Canonical display order for methods in reports.
pub fn method_order(method: Method) -> usize {
    match method {
        Method::Oracle => 0,
        Method::Classical => 1,
        Method::Naive => 2,
        Method::Postpi => 3,
        Method::Proposed => 4,
    }
}

/// Render metrics rows grouped by (setting, beta1), one sub-table per
/// group, with the rejection column labeled T1 Err or Power by effect size.
pub fn render_table(rows: &[MetricsRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("no metrics rows to render".into()));
    }
    let mut sorted: Vec<&MetricsRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        (a.setting_id, a.beta1, method_order(a.method))
            .partial_cmp(&(b.setting_id, b.beta1, method_order(b.method)))
            .expect("finite keys")
    });

    let mut out = String::new();
    let mut current_group: Option<(u8, f64)> = None;
    for row in sorted {
        let group = (row.setting_id, row.beta1);
        if current_group != Some(group) {
            if current_group.is_some() {
                out.push('\n');
            }
            let rejection_label = if row.beta1 == 0.0 { "T1 Err" } else { "Power" };
            out.push_str(&format!(
                "Setting {} (beta1 = {:.3})\n{:>5} {:>5} {:>6} {:<10} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
                row.setting_id,
                row.beta1,
                "n_t",
                "n",
                "N",
                "Method",
                "Bias",
                "MSE",
                "CI W",
                "Cov",
                rejection_label,
            ));
            current_group = Some(group);
        }
        out.push_str(&format!(
            "{:>5} {:>5} {:>6} {:<10} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3}\n",
            row.n_t,
            row.n,
            row.big_n,
            row.method.name(),
            row.bias,
            row.mse,
            row.mean_ci_width,
            row.coverage,
            row.rejection_rate,
        ));
    }
    Ok(out)
}
