use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt file {path}: {reason}")]
    CorruptFile { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("signal too short: need at least {needed} samples, got {got}")]
    SignalTooShort { needed: usize, got: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("silent signal: {0}")]
    SilentSignal(&'static str),

    #[error("graph output has shape {0:?}, expected a scalar")]
    NotScalar(Vec<usize>),

    #[error("unbound graph input `{0}`")]
    UnboundInput(String),

    #[error("degenerate normalization scale for `{component}`: initial loss {value}")]
    DegenerateScale { component: String, value: f64 },

    #[error("numerical divergence at epoch {epoch}, step {step}: {detail}")]
    NumericalDivergence {
        epoch: usize,
        step: usize,
        detail: String,
    },

    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),

    #[error("no data: {0}")]
    NoData(String),

    #[error("invalid cost string `{cost}`: {reason}")]
    InvalidCost { cost: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::CorruptFile {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
