use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("CIBP recursion truncated at depth cap {cap} with {width} customers still active")]
    Truncated { cap: usize, width: usize },

    #[error("inconsistent model state: {0}")]
    Inconsistent(String),

    #[error("non-finite log density after {0}")]
    NonFinite(&'static str),

    #[error("{format} parse error ({kind:?}) at byte {offset}: {reason}")]
    Parse {
        format: &'static str,
        kind: ParseErrorKind,
        offset: usize,
        reason: String,
    },

    #[error("checkpoint parse error on line {line}: {reason}")]
    Checkpoint { line: usize, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    BadMagic,
    Truncated,
    DimensionOverflow,
    Malformed,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
