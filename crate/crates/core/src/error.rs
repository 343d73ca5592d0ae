//! Error type shared across the toolkit.

use thiserror::Error;

/// Errors produced by detectors, the selection pipeline, and the IO layer.
#[derive(Debug, Error)]
pub enum OdError {
    /// Input data failed validation (NaN/Inf entries, empty matrix, bad labels).
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// Query feature count does not match the fitted dimensionality.
    #[error("dimension mismatch: model expects {expected} features, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// A hyperparameter key is not recognized by the target detector.
    #[error("unknown hyperparameter `{key}` for detector `{detector}`")]
    UnknownHyperparam { detector: String, key: String },

    /// A hyperparameter value is out of range or has the wrong type.
    #[error("invalid hyperparameter `{key}`: {message}")]
    InvalidHyperparam { key: String, message: String },

    /// An operation precondition was violated (contamination range, epochs, k...).
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// A detector that needs labeled anomalies was fit without them.
    #[error("labels required: {0}")]
    LabelsRequired(String),

    /// Training produced a non-finite loss.
    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    /// A CSV cell failed to parse; row is the 1-based data row, col the 1-based column.
    #[error("csv parse error at row {row}, column {col}: {message}")]
    CsvCell { row: usize, col: usize, message: String },

    /// Structural CSV problem (ragged rows, empty file, missing header).
    #[error("csv format error: {0}")]
    CsvFormat(String),

    /// Model registry problem: vocabulary violation, duplicate id, bad schema.
    #[error("registry error: {0}")]
    Registry(String),

    /// Persisted model file problem (schema version, truncation).
    #[error("model file error: {0}")]
    ModelFile(String),

    /// LLM transport failure after retries.
    #[error("llm transport error: {0}")]
    LlmTransport(String),

    /// LLM reply could not be parsed into the expected JSON shape.
    #[error("llm reply parse error: {0}")]
    LlmParse(String),

    /// Replay-mode request not present in the transcript.
    #[error("replay miss: no transcript record for request hash {0}")]
    ReplayMiss(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, OdError>;
