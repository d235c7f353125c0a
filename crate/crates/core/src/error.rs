//! Error type shared across the crate.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A distribution or model parameter is outside its domain.
    #[error("parameter out of domain: {0}")]
    ParamDomain(String),

    /// Mismatched dimensions between inputs.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A linear-algebra routine failed; `diagnostic` reports the matrix
    /// conditioning seen at the failure site.
    #[error("numerical failure in {context}: {diagnostic}")]
    Numerical { context: String, diagnostic: String },

    /// An iterative routine hit its iteration cap. `last_iterate` carries the
    /// final point so callers can inspect how far it got.
    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence {
        what: String,
        iterations: usize,
        last_iterate: Vec<f64>,
    },

    #[error("chain store is empty")]
    EmptyChains,

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A text or CSV input failed to parse. Row and column are 1-based and
    /// refer to the data grid, not byte offsets.
    #[error("parse error in {path} at row {row}, column {col}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        col: usize,
        message: String,
    },

    #[error("column {column} has zero variance; cannot scale")]
    ZeroVariance { column: usize },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("manifest hash mismatch: stored {stored}, recomputed {recomputed}")]
    ManifestMismatch { stored: String, recomputed: String },

    #[error("checksum mismatch for {file}")]
    Checksum { file: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
