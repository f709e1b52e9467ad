use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: malformed record ({field}): {message}")]
    Malformed {
        line: usize,
        field: String,
        message: String,
    },

    #[error("line {line}: duplicate patient_id `{patient_id}`")]
    DuplicatePatient { line: usize, patient_id: String },

    #[error("line {line}: patient `{patient_id}` event {event} at {timestamp} lies outside the stay")]
    EventOutOfRange {
        line: usize,
        patient_id: String,
        event: String,
        timestamp: String,
    },

    #[error("invalid record `{patient_id}`: {message}")]
    InvalidRecord { patient_id: String, message: String },

    #[error("cohort split: {0}")]
    Split(String),

    #[error("feature catalog is empty: no code reached the minimum support of {min_support} patients")]
    EmptyCatalog { min_support: usize },

    #[error("degenerate labels: need at least {needed} examples of each class (got {positives} positive, {negatives} negative)")]
    DegenerateLabels {
        needed: usize,
        positives: usize,
        negatives: usize,
    },

    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("alert `{alert_id}`: expected {expected} assessments, got {actual}")]
    MissingReviewer {
        alert_id: String,
        expected: usize,
        actual: usize,
    },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("forbidden: {0}")]
    Forbidden(String),

    #[error("path does not exist: {}", .0.display())]
    MissingPath(PathBuf),

    #[error("pipeline stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage {
            stage,
            source: Box::new(source),
        }
    }
}
