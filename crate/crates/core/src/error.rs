use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot aggregate zero annotations")]
    EmptyAnnotations,

    #[error("invalid label vocabulary: {0}")]
    InvalidVocab(String),

    #[error("invalid label distribution: {0}")]
    InvalidDistribution(String),

    #[error("infeasible budget plan: {0}")]
    InfeasiblePlan(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("record {uid}: {message}")]
    Record { uid: String, message: String },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("mixing coefficient {0} outside [0, 1]")]
    LambdaOutOfRange(f64),

    #[error("strategy {strategy} requires a non-empty {set} set")]
    EmptySet { strategy: String, set: &'static str },

    #[error("non-finite loss at iteration {iter}; log tail:\n{tail}")]
    NonFiniteLoss { iter: usize, tail: String },

    #[error("calibration: {0}")]
    Calibration(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable snake_case name of the variant, for machine-readable output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyAnnotations => "empty_annotations",
            Error::InvalidVocab(_) => "invalid_vocab",
            Error::InvalidDistribution(_) => "invalid_distribution",
            Error::InfeasiblePlan(_) => "infeasible_plan",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Parse { .. } => "parse",
            Error::Record { .. } => "record",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::LambdaOutOfRange(_) => "lambda_out_of_range",
            Error::EmptySet { .. } => "empty_set",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::Calibration(_) => "calibration",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn record(uid: &str, message: impl Into<String>) -> Self {
        Error::Record {
            uid: uid.to_string(),
            message: message.into(),
        }
    }
}
