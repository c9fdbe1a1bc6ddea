use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch between shapes {lhs:?} and {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("shape {shape:?} holds {expected} values but {got} were provided")]
    ShapeData {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },

    #[error("target id {id} out of range for vocabulary of size {vocab}")]
    TargetOutOfRange { id: usize, vocab: usize },

    #[error("non-finite value in {what} at step {step}")]
    NonFinite { what: String, step: u64 },

    #[error("backward already ran on this graph; build a fresh graph before calling it again")]
    GraphConsumed,

    #[error("{path}:{line}: {msg}")]
    ParseLine {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("noise spec {name:?}: {msg} at position {pos}")]
    NoiseSpec {
        name: String,
        pos: usize,
        msg: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Coarse classification used by the CLI to pick exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::NoiseSpec { .. } => ErrorKind::Config,
            Error::Data(_) | Error::ParseLine { .. } | Error::TargetOutOfRange { .. } => {
                ErrorKind::Data
            }
            Error::NonFinite { .. } => ErrorKind::Numeric,
            Error::Io { .. } => ErrorKind::Io,
            _ => ErrorKind::Internal,
        }
    }
}

/// Exit-code classes: config 2, data 3, numeric 4, I/O 5.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
    Io,
    Internal,
}

pub type Result<T> = std::result::Result<T, Error>;
