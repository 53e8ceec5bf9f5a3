//! Black-box prediction models f: Z -> Y. The upstream model is trained
//! on its own split and treated as opaque by the estimators; the
//! `External` kind carries predictions supplied from outside (e.g. file
//! columns) when no trainable model exists.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::forest::{train_random_forest, RandomForestModel};
use crate::spline::{train_spline_additive, SplineAdditiveModel};

pub use crate::forest::RandomForestConfig;
pub use crate::spline::SplineAdditiveConfig;

#[derive(Debug, Clone)]
pub enum PredictionModel {
    SplineAdditive(SplineAdditiveModel),
    RandomForest(RandomForestModel),
    /// Precomputed prediction column; `predict` returns it verbatim when
    /// the requested row count matches.
    External { predictions: DVector<f64> },
}

impl PredictionModel {
    pub fn train_spline_additive(
        z: &DMatrix<f64>,
        y: &DVector<f64>,
        config: &SplineAdditiveConfig,
    ) -> Result<Self> {
        Ok(Self::SplineAdditive(train_spline_additive(z, y, config)?))
    }

    pub fn train_random_forest(
        z: &DMatrix<f64>,
        y: &DVector<f64>,
        config: &RandomForestConfig,
    ) -> Result<Self> {
        Ok(Self::RandomForest(train_random_forest(z, y, config)?))
    }

    pub fn predict(&self, z: &DMatrix<f64>) -> Result<DVector<f64>> {
        let out = match self {
            Self::SplineAdditive(m) => m.predict(z)?,
            Self::RandomForest(m) => m.predict(z)?,
            Self::External { predictions } => {
                if predictions.len() != z.nrows() {
                    return Err(Error::DimensionMismatch(format!(
                        "external predictions cover {} rows, requested {}",
                        predictions.len(),
                        z.nrows()
                    )));
                }
                predictions.clone()
            }
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model predictions".into()));
        }
        Ok(out)
    }
}
