use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("division by zero at coordinate {index}")]
    DivisionByZero { index: usize },

    #[error("vector must have at least one coordinate")]
    EmptyVector,

    #[error("non-finite value at coordinate {index}")]
    NonFiniteValue { index: usize },

    #[error("objective returned a non-finite value")]
    NonFiniteEvaluation,

    #[error("iterate became non-finite at step {step}")]
    NonFiniteIterate { step: u64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid bound schedule at t={t}: lower {lower} > upper {upper}")]
    InvalidSchedule { t: u64, lower: f64, upper: f64 },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("one-point convexity violated: inner product {inner} <= delta * dist^2 = {required}")]
    HypothesisViolated { inner: f64, required: f64 },

    #[error("invalid region: r_min={r_min}, r_max={r_max}")]
    InvalidRegion { r_min: f64, r_max: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
