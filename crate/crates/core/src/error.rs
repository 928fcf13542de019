use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, NeteError>;

#[derive(Debug, Error)]
pub enum NeteError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("index {index} out of range (valid: {lo}..={hi})")]
    IndexOutOfRange { index: usize, lo: usize, hi: usize },

    #[error("insufficient sample: need at least {needed} values, got {got}")]
    InsufficientSample { needed: usize, got: usize },

    #[error("infinite tail moment: alpha * gamma = {product} >= 1")]
    InfiniteMoment { product: f64 },

    #[error("treatment vector contains a single class")]
    DegenerateTreatment,

    #[error("regressor is degenerate: {0}")]
    DegenerateRegressor(String),

    #[error("column {column} is constant")]
    DegenerateColumn { column: usize },

    #[error("no observations above threshold t = {threshold}")]
    EmptyTail { threshold: f64 },

    #[error("invalid table: {0}")]
    InvalidTable(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: expected {expected} columns, found {found}")]
    Schema {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("{path}: {source}")]
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

impl NeteError {
    /// Errors that the benchmark harness counts as a failed repetition
    /// rather than aborting the run.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            NeteError::EmptyTail { .. }
                | NeteError::InfiniteMoment { .. }
                | NeteError::DegenerateTreatment
                | NeteError::DegenerateRegressor(_)
                | NeteError::InsufficientSample { .. }
                | NeteError::Domain(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NeteError::Io {
            path: path.into(),
            source,
        }
    }
}
