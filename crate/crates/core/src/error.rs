//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by calibration, matching, and evaluation operations.
///
/// [`Error::exit_code`] groups variants into validation failures (bad inputs,
/// files, or configuration) and numerical failures (a computation that could
/// not produce a finite answer).
#[derive(Debug, Error)]
pub enum Error {
    #[error("patch region {patch} lies outside the {width}x{height} image bounds")]
    RegionOutOfBounds {
        patch: usize,
        width: usize,
        height: usize,
    },

    #[error("patch region {patch} has zero area")]
    DegenerateRegion { patch: usize },

    #[error("zero colour intensity: chromaticity is undefined for R+G+B = 0")]
    ZeroIntensity,

    #[error("curve evaluation input {value} outside the domain [0, 1]")]
    CurveDomain { value: f64 },

    #[error("curve '{name}' is not monotone non-decreasing (violation {violation} at sample {index})")]
    NonMonotone {
        name: String,
        index: usize,
        violation: f64,
    },

    #[error("curve '{name}' is invalid: {reason}")]
    InvalidCurve { name: String, reason: String },

    #[error("dimension mismatch: {context} (expected {expected}, got {actual})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("parse error in block {block}: {reason}")]
    Parse { block: usize, reason: String },

    #[error("row {row} is degenerate: first and last entries are equal ({value})")]
    DegenerateRow { row: usize, value: f64 },

    #[error("insufficient data: {context} (need at least {required}, got {actual})")]
    InsufficientData {
        context: &'static str,
        required: usize,
        actual: usize,
    },

    #[error("degenerate regression: {context} has zero variance")]
    DegenerateRegression { context: &'static str },

    #[error("recovery angular error is undefined for a zero vector")]
    ZeroVector,

    #[error("BR chromaticity ratio is undefined when r or b is zero")]
    UndefinedRatio,

    #[error("degenerate channel {channel}: {reason}")]
    DegenerateChannel { channel: usize, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("optimisation failed: all {restarts} restarts ended with a non-finite cost")]
    OptimisationFailed { restarts: usize },

    #[error("annotation error: {0}")]
    Annotation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {path}: {source}")]
    Image {
        path: String,
        #[source]
        source: image::ImageError,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Process exit code the CLI maps this error to: 2 for validation
    /// problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::OptimisationFailed { .. }
            | Error::NonMonotone { .. }
            | Error::DegenerateRow { .. }
            | Error::DegenerateRegression { .. }
            | Error::ZeroIntensity
            | Error::ZeroVector
            | Error::UndefinedRatio
            | Error::DegenerateChannel { .. } => 3,
            _ => 2,
        }
    }
}
