use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data does not match the declared column schema.
    #[error("schema error: {0}")]
    Schema(String),
    /// Matrix or parameter dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// Invalid configuration or hyperparameter.
    #[error("invalid config: {0}")]
    Config(String),
    /// Non-finite values or other numeric failures.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Dataset-level contract violation (empty split, missing class, ...).
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
