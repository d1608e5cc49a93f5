use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("weight {name}[{index}] = {value} must be strictly positive")]
    NonPositiveWeight {
        name: &'static str,
        index: usize,
        value: f64,
    },

    #[error("inertia matrix is ill-conditioned (condition estimate {0:.3e})")]
    IllConditioned(f64),

    #[error("non-finite state at t = {t:.6} s: {what}")]
    NonFinite { t: f64, what: String },

    #[error("actuation matrix has rank {rank} < {cols} columns")]
    RankDeficientB { rank: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{path}: parse error: {message}")]
    Parse { path: String, message: String },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("unknown {kind} '{name}'")]
    Unknown { kind: &'static str, name: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("serialization failed: {0}")]
    Serialize(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
