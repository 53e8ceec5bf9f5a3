use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("design matrix is rank deficient at column {column} (|R[{column},{column}]| = {pivot:.3e})")]
    RankDeficient { column: usize, pivot: f64 },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("relationship model unidentified: predictions are constant")]
    ConstantPredictions,

    #[error("true unlabeled outcomes are not available")]
    MissingTrueOutcomes,
}

pub type Result<T> = std::result::Result<T, Error>;
