use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("point is not on the open simplex: {0}")]
    Simplex(String),

    #[error("ramp times must satisfy 0 < T0 < T1 < T (got T0={t0}, T1={t1}, T={t})")]
    RampOrdering { t0: f64, t1: f64, t: f64 },

    #[error("Q path does not cover [0, {t}]: {msg}")]
    GridCoverage { t: f64, msg: String },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("price-sensitivity matrix is numerically singular (condition {cond:e}); the generator violates directional concavity")]
    Degenerate { cond: f64 },

    #[error("eigenvalue solver failed to converge")]
    Eigen,

    #[error("shape function has unbounded slope or time factor: {0}")]
    UnboundedShape(String),

    #[error("config `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("stride mismatch: {0}")]
    Stride(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line surface: 2 for configuration
    /// problems, 1 for everything that goes wrong at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            _ => 1,
        }
    }
}
