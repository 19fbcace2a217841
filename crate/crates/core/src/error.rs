//! Error type shared by every module in the crate.

use std::fmt;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the pipeline, model, objective, and evaluation code.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A vector with norm below 1e-12 cannot be L2-normalized.
    ZeroVector,
    /// Two operands disagree on a dimension that must match.
    DimensionMismatch { context: String },
    /// Shape disagreement between feature sets handed to an evaluation.
    ShapeMismatch { context: String },
    /// Mixup coefficient outside [0, 1].
    AlphaOutOfRange { alpha: f64 },
    /// A file header could not be parsed.
    MalformedHeader { context: String },
    /// A file payload ended before the expected byte count.
    TruncatedPayload { expected: usize, got: usize },
    /// A file's magic bytes do not identify the expected format.
    MagicMismatch,
    /// A file's format version is newer than this build understands.
    VersionUnsupported { got: u32 },
    /// A configuration failed validation.
    ConfigInvalid { context: String },
    /// InfoNCE needs at least two rows to have a negative.
    BatchTooSmall { got: usize },
    /// Temperature outside the configured clip range.
    TauOutOfRange { tau: f64, min: f64, max: f64 },
    /// Asked to subsample more dense tokens than exist.
    TooFewTokens { available: usize, requested: usize },
    /// Parameter and gradient vectors disagree in length.
    LengthMismatch { expected: usize, got: usize },
    /// A dataset path does not contain the expected files.
    DataMissing { path: String },
    /// The training loss left the finite range at the given step.
    NonFiniteLoss { step: usize },
    /// An index points outside its collection.
    IndexOutOfRange { index: usize, len: usize },
    /// Diagnostics need at least two scenes to form mismatched pairs.
    TooFewScenes { got: usize },
    /// A k-NN index with no entries cannot answer queries.
    EmptyIndex,
    /// Wrapper around I/O failures.
    Io { message: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ZeroVector => write!(f, "cannot normalize a vector with norm < 1e-12"),
            Error::DimensionMismatch { context } => write!(f, "dimension mismatch: {context}"),
            Error::ShapeMismatch { context } => write!(f, "shape mismatch: {context}"),
            Error::AlphaOutOfRange { alpha } => {
                write!(f, "mixup alpha {alpha} outside [0, 1]")
            }
            Error::MalformedHeader { context } => write!(f, "malformed header: {context}"),
            Error::TruncatedPayload { expected, got } => {
                write!(f, "truncated payload: expected {expected} bytes, got {got}")
            }
            Error::MagicMismatch => write!(f, "magic bytes do not match the expected format"),
            Error::VersionUnsupported { got } => write!(f, "unsupported format version {got}"),
            Error::ConfigInvalid { context } => write!(f, "invalid config: {context}"),
            Error::BatchTooSmall { got } => {
                write!(f, "InfoNCE needs a batch of at least 2, got {got}")
            }
            Error::TauOutOfRange { tau, min, max } => {
                write!(f, "temperature {tau} outside [{min}, {max}]")
            }
            Error::TooFewTokens {
                available,
                requested,
            } => write!(f, "asked for {requested} dense tokens, only {available} exist"),
            Error::LengthMismatch { expected, got } => {
                write!(f, "length mismatch: expected {expected}, got {got}")
            }
            Error::DataMissing { path } => write!(f, "dataset missing at {path}"),
            Error::NonFiniteLoss { step } => {
                write!(f, "loss became non-finite at step {step}")
            }
            Error::IndexOutOfRange { index, len } => {
                write!(f, "index {index} out of range for length {len}")
            }
            Error::TooFewScenes { got } => {
                write!(f, "need at least 2 scenes for mismatched pairs, got {got}")
            }
            Error::EmptyIndex => write!(f, "k-NN index is empty"),
            Error::Io { message } => write!(f, "io error: {message}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io {
            message: e.to_string(),
        }
    }
}
