//! Valid statistical inference when outcomes in a large unlabeled sample
//! are machine predictions, calibrated against a small labeled sample.
//!
//! The crate implements the pseudo-outcome (post-prediction) estimator,
//! a moment-corrected extension with a sandwich variance that keeps the
//! labeled-sample contribution from vanishing as the unlabeled sample
//! grows, the benchmark regressions (oracle, classical, naive), and a
//! seeded Monte Carlo engine for coverage and type I error studies.

pub mod error;
pub mod estimators;
pub mod forest;
pub mod moments;
pub mod ols;
pub mod predictors;
pub mod rng;
pub mod simulation;
pub mod spline;

pub use error::{Error, Result};
pub use estimators::{
    compute_moments, contrast_inference, design_with_intercept, estimate, estimate_classical,
    estimate_naive, estimate_oracle, estimate_postpi, estimate_proposed,
    estimate_proposed_from_moments, fit_relationship, pseudo_outcomes, wald_interval, Dataset,
    FitResult, InferenceOptions, Method, MomentSet, PostPiVarianceComponents, RelationshipFit,
};
pub use moments::{cross_moment_mean, gram_mean, outer_moment};
pub use ols::{ols_fit, OlsFit};
pub use predictors::{PredictionModel, RandomForestConfig, SplineAdditiveConfig};
pub use rng::{sample_bivariate_normal, sample_standard_normal, RngSeed};
pub use simulation::{
    aggregate_metrics, generate_setting12, generate_setting3, method_order, render_table,
    run_monte_carlo, run_replicate, CoefficientSummary, MetricsRow, MonteCarloConfig,
    MonteCarloResult, PredictorSpec, RawSample, ReplicateRecord, SimSetting,
};
