use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    /// A malformed line in one of the text formats. `line` is 1-based.
    #[error("{context}:{line}: {message}")]
    Parse {
        context: String,
        line: usize,
        message: String,
    },

    #[error("parallel corpus files diverge at line {line}: {detail}")]
    LineCountMismatch { line: usize, detail: String },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("invalid phrase rule: {0}")]
    InvalidRule(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("candidate not scored: missing feature `{0}`")]
    NotScored(&'static str),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("empty tuning grid")]
    EmptyGrid,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("scorer protocol: {0}")]
    Protocol(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            line,
            message: message.into(),
        }
    }
}
