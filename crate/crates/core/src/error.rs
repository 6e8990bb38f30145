use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("quadrature did not converge: achieved error {achieved:.3e} > requested {requested:.3e}")]
    QuadratureNotConverged { value: f64, achieved: f64, requested: f64 },

    #[error("unknown agent id {0}")]
    UnknownAgent(u64),

    #[error("point ({x:.1}, {y:.1}) outside grid bounds")]
    OutOfBounds { x: f64, y: f64 },

    #[error("comparable bound weight undefined: recipient mean lower equals recipient mean upper")]
    DegenerateComparableWeight,

    #[error("{context}: missing price for model {model} in month {month}")]
    MissingPrice { context: String, model: u64, month: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("scenario stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
