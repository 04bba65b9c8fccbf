use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// `1/sqrt(p) + w` collapsed to (numerically) zero during renormalization.
    #[error("degenerate direction: norm of 1/sqrt(p) + w is {norm:e}")]
    DegenerateDirection { norm: f64 },

    #[error("state is off the unit-norm manifold: |1/sqrt(p) + w| = {norm}")]
    OffManifold { norm: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid teacher: {0}")]
    InvalidTeacher(String),

    #[error("region sampling exhausted {budget} proposals without a member")]
    InfeasibleRegion { budget: usize },

    #[error("unknown monitor `{0}`")]
    UnknownMonitor(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
