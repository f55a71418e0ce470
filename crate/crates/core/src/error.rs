use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("linesearch stalled at iteration {iter} after {backtracks} backtracks (last tau = {last_tau:e})")]
    LinesearchStalled {
        iter: usize,
        last_tau: f64,
        backtracks: usize,
    },

    #[error("direction is not a descent direction at iteration {iter}: <w,d> = {inner:e}")]
    NonDescentDirection { iter: usize, inner: f64 },

    #[error("direction strategy broke its declared constant `{constant}` at iteration {iter}")]
    StrategyContract { iter: usize, constant: &'static str },

    #[error("memory schedule returned {got} at iteration {iter}, allowed range is 0..={max}")]
    InvalidSchedule { iter: usize, got: usize, max: usize },

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("factorization of Q + I/lambda failed; Q is not symmetric or is corrupted")]
    Factorization,

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
