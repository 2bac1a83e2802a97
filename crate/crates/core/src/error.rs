use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),

    #[error("group {level} of attribute `{attribute}` is empty")]
    EmptyGroup { attribute: String, level: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid distribution: {0}")]
    Distribution(String),

    #[error("sinkhorn produced non-finite values with epsilon = {epsilon:e}; epsilon is too small for the cost scale")]
    SinkhornNonFinite { epsilon: f64 },

    #[error("embedding row {row} of the {side} batch has zero norm")]
    ZeroNorm { side: &'static str, row: usize },

    #[error("non-finite gradient in parameter block {0}")]
    NonFiniteGradient(usize),

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("checkpoint is corrupted: {0}")]
    Checksum(String),

    #[error("{0}")]
    Mismatch(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SinkhornNonFinite { .. }
                | Error::NonFiniteGradient(_)
                | Error::NonFiniteLoss { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
