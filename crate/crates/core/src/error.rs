use std::path::PathBuf;

/// Errors produced by the audit pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Ingest {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {malformed} of {rows} rows are malformed")]
    CorruptInput {
        path: PathBuf,
        malformed: usize,
        rows: usize,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("requested {requested} items from a population of {available}")]
    InsufficientPopulation { requested: usize, available: usize },

    #[error("{0} is undefined for this input")]
    Undefined(&'static str),

    #[error("unresolved annotation disagreements on reviews: {}", .0.join(", "))]
    UnresolvedDiscussions(Vec<String>),

    #[error("embedding provider transport failure: {0}")]
    Transport(String),

    #[error("provider contract violated: {0}")]
    ProviderContract(String),

    #[error("embedding batch failed at chunk {chunk} after {completed} rows: {source}")]
    BatchFailed {
        chunk: usize,
        completed: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("model file format {found} is incompatible with supported version {supported}")]
    IncompatibleModel { found: u32, supported: u32 },

    #[error("malformed model file: {0}")]
    ModelFormat(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Coarse classification used for exit codes and HTTP status mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Io,
    Internal,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Ingest { .. } | Error::Io { .. } | Error::Transport(_) => ErrorKind::Io,
            Error::BatchFailed { source, .. } => source.kind(),
            Error::Serde(_) | Error::Csv(_) => ErrorKind::Internal,
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
