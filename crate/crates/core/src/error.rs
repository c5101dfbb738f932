use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("vector has zero norm")]
    ZeroNorm,

    #[error("vector contains a non-finite value")]
    NonFinite,

    #[error("empty input: {0}")]
    Empty(&'static str),

    /// A cluster whose member mean is the zero vector has no direction.
    #[error("degenerate cluster: member embeddings average to the zero vector")]
    DegenerateCentroid,

    #[error(
        "distance matrix for {points} points needs {required} bytes, budget is {available} bytes; \
         reduce partial_set_size"
    )]
    MemoryBudget {
        points: usize,
        required: usize,
        available: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("unknown cluster selection method {0:?} (expected \"eom\" or \"leaf\")")]
    UnknownMethod(String),

    #[error("{}:{row}: {message}", path.display())]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("utterances without a speaker label: {}", .0.join(", "))]
    MissingLabels(Vec<String>),

    #[error("utterances without a duration: {}", .0.join(", "))]
    MissingDurations(Vec<String>),

    #[error("partition invariant violated after stage {stage}: {detail}")]
    Invariant { stage: String, detail: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, row: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            row,
            message: message.into(),
        }
    }
}
