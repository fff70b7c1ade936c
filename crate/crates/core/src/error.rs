use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid zonotope: {0}")]
    InvalidZonotope(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("generator {index} has norm {norm:e}, below the degeneracy tolerance")]
    DegenerateGenerator { index: usize, norm: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("training mode requires ground truth ({0})")]
    MissingTruth(&'static str),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("file contains no records")]
    EmptyFile,

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error("planner infeasible: max violation {violation:.3e} after {iterations} iterations")]
    Infeasible { violation: f64, iterations: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}
