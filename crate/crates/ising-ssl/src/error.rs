use thiserror::Error;

/// Errors produced by dataset handling, encoding, solvers, and learning.
#[derive(Error, Debug)]
pub enum Error {
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("label coverage: {0}")]
    LabelCoverage(String),

    #[error("unlabeled fraction too high: {0}")]
    FractionTooHigh(String),

    #[error("zero total variance; nothing to project")]
    ZeroVariance,

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("{got} labels exceeds the exact path-search limit of {limit}; enable the greedy heuristic instead")]
    TooManyLabels { got: usize, limit: usize },

    #[error("{got} free spins exceeds the exact enumeration limit of {limit}")]
    TooManyFreeSpins { got: usize, limit: usize },

    #[error("{got} labeled points exceeds the exact partition limit of {limit}; use the block scheme")]
    TooManyForExactPartition { got: usize, limit: usize },

    #[error("spin configuration violates clamp on spin {spin}")]
    ClampViolation { spin: usize },

    #[error("objective is not finite at the supplied parameters")]
    NonFiniteObjective,

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
