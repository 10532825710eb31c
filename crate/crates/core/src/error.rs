use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the core crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("first-error index out of range: {index} not in [1, {steps}]")]
    IndexOutOfRange { index: usize, steps: usize },

    #[error("non-binary outcome {0}; expected 0 or 1")]
    NonBinaryOutcome(i64),

    #[error("no steps found")]
    NoSteps,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),

    #[error("line {line}: malformed record: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("non-finite loss on trajectory {id}")]
    NonFiniteLoss { id: String },

    #[error("problem {problem_id} has {available} candidates, {required} required")]
    InsufficientCandidates {
        problem_id: String,
        available: usize,
        required: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
