use std::path::PathBuf;

use fairprint_stats::StatError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad configuration or arguments.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A value that violates a data-model invariant.
    #[error("invalid data: {0}")]
    Data(String),

    #[error("{file}:{line}:{column}: {message}")]
    Parse {
        file: String,
        line: u64,
        column: usize,
        message: String,
    },

    #[error("empty score set")]
    EmptyScoreSet,

    #[error("rate undefined: {0}")]
    Undefined(String),

    #[error("bootstrap replicate {index}: {cause}")]
    Replicate { index: usize, cause: String },

    #[error("target {target} is below the rank-failure floor {floor}")]
    FnirFloor { target: f64, floor: f64 },

    #[error(transparent)]
    Stat(#[from] StatError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), source: Box::new(self) }
    }

    /// Process exit code: 1 usage/validation, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Data(_) | Error::Parse { .. } | Error::EmptyScoreSet | Error::Io { .. } => 2,
            Error::Undefined(_) | Error::Replicate { .. } | Error::FnirFloor { .. } => 3,
            Error::Stat(StatError::Domain(_)) => 1,
            Error::Stat(_) => 3,
            Error::Context { source, .. } => source.exit_code(),
        }
    }
}
