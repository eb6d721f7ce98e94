use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate clustering: {0}")]
    DegenerateClustering(String),

    #[error("invalid aging region: {0}")]
    InvalidRegion(String),

    #[error("malformed CSV in {path}: {message}")]
    MalformedCsv { path: PathBuf, message: String },

    #[error("malformed JSON in {path}: {message}")]
    MalformedJson { path: PathBuf, message: String },

    #[error("missing cell path={path_id} col={col} row={row}")]
    MissingCell {
        path_id: usize,
        col: usize,
        row: usize,
    },

    #[error("duplicate cell path={path_id} col={col} row={row}")]
    DuplicateCell {
        path_id: usize,
        col: usize,
        row: usize,
    },

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("invalid frequency {value} at path={path_id} col={col} row={row}")]
    InvalidFrequency {
        path_id: usize,
        col: usize,
        row: usize,
        value: f64,
    },

    #[error("{}: {source}", path.display())]
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
}
