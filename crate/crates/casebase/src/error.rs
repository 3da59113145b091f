//! Crate-wide error type.
//!
//! Every malformed input maps to a typed variant; callers that need to
//! translate failures into process exit codes can use [`Error::class`] to
//! distinguish data problems from numerical ones.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure category, used by the CLI for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed or inconsistent input data, files, or arguments.
    Data,
    /// Numerical failure during fitting or integration.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed delimited file: {0}")]
    Csv(#[from] csv::Error),

    // -- dataset validation -------------------------------------------------
    #[error("missing column `{name}`")]
    MissingColumn { name: String },
    #[error("non-numeric value `{value}` in column `{column}` at data row {row}")]
    NonNumericValue {
        column: String,
        row: usize,
        value: String,
    },
    #[error("non-positive follow-up time {value} at data row {row}")]
    NonPositiveFollowup { row: usize, value: f64 },
    #[error("follow-up time {value} at data row {row} exceeds tau {tau}")]
    FollowupExceedsTau { row: usize, value: f64, tau: f64 },
    #[error("invalid event code `{value}` at data row {row} (must be an integer in 0..=J)")]
    InvalidEventCode { row: usize, value: String },
    #[error("missing cell in column `{column}` at data row {row}")]
    MissingCell { column: String, row: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("dataset contains no events")]
    NoEvents,
    #[error("tau must be positive, got {0}")]
    NonPositiveTau(f64),
    #[error("reference level `{level}` for column `{column}` not among observed levels")]
    ReferenceLevelMissing { column: String, level: String },
    #[error("covariate layout differs at data row {row}")]
    InconsistentCovariates { row: usize },

    // -- sampling -----------------------------------------------------------
    #[error("base-series size {requested} exceeds the row cap {cap}")]
    RowCapExceeded { requested: u64, cap: u64 },
    #[error("annotation rule failed at row {row}: {message}")]
    AnnotationFailed { row: usize, message: String },

    // -- design -------------------------------------------------------------
    #[error("unknown covariate `{name}`")]
    UnknownCovariate { name: String },
    #[error("unseen level `{level}` for covariate `{covariate}` at row {row}")]
    UnseenLevel {
        covariate: String,
        level: String,
        row: usize,
    },
    #[error("degenerate knot vector: {0}")]
    DegenerateKnots(String),
    #[error("non-finite time value {value}")]
    NonFiniteTime { value: f64 },
    #[error("invalid model spec: {0}")]
    InvalidModelSpec(String),
    #[error("profile is missing covariate `{name}`")]
    ProfileMissingCovariate { name: String },

    // -- model files --------------------------------------------------------
    #[error("unsupported model file version {found} (supported: {supported})")]
    ModelVersionMismatch { found: u32, supported: u32 },
    #[error("corrupted model file: {0}")]
    CorruptModelFile(String),

    // -- fitting ------------------------------------------------------------
    #[error("design matrix is rank deficient (offending columns: {columns:?})")]
    RankDeficient { columns: Vec<String> },
    #[error("event class {class} has no observations")]
    EmptyClass { class: u32 },
    #[error("complete separation detected (|theta| = {norm:.3e} with gradient norm {gradient_norm:.3e})")]
    Separation { norm: f64, gradient_norm: f64 },
    #[error("fit diverged: {0}")]
    Diverged(String),
    #[error("linear solve failed: {0}")]
    SolveFailed(String),
    #[error("models are not nested: {0}")]
    NotNested(String),
    #[error("models were fitted on different data (fingerprint mismatch)")]
    DataFingerprintMismatch,
    #[error("model has not converged")]
    NotConverged,

    // -- generic argument validation ---------------------------------------
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::RankDeficient { .. }
            | Error::EmptyClass { .. }
            | Error::Separation { .. }
            | Error::Diverged(_)
            | Error::SolveFailed(_)
            | Error::NotConverged => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }
}
