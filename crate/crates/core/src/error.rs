use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    /// Input violates the declared schema (missing column, bad key, ...).
    #[error("schema: {0}")]
    Schema(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("duplicate key: {0}")]
    Duplicate(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(String),

    /// A statistic is undefined for the given data (zero variance, zero baseline, ...).
    #[error("undefined: {0}")]
    Undefined(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}
