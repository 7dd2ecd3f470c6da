use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the toolkit.
///
/// Variants are grouped so the command-line front end can map them onto
/// distinct exit codes (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error(
        "non-finite loss at epoch {epoch}, batch {batch} (max |grad| = {max_abs_grad:e})"
    )]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        max_abs_grad: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("grid cell (sigma={sigma}, lambda={lambda}): {source}")]
    Cell {
        sigma: f64,
        lambda: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("permutation {index}: {source}")]
    Permutation {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 config, 3 data/I-O, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io { .. } | Error::Data(_) | Error::Row { .. } | Error::Shape(_) => 3,
            Error::NonFiniteLoss { .. } | Error::Numerical(_) => 4,
            Error::Cell { source, .. } | Error::Permutation { source, .. } => source.exit_code(),
        }
    }
}
