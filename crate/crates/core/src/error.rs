use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node index {index} out of range for graph with {n_nodes} nodes")]
    IndexOutOfRange { index: usize, n_nodes: usize },

    #[error("edge weight must be positive and finite, got {0}")]
    NonPositiveWeight(f64),

    #[error("graph must have at least one node")]
    EmptyGraph,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dense solve failed: system is singular")]
    SingularSystem,

    #[error("empty index set: {0}")]
    EmptyIndexSet(&'static str),

    #[error("class {class} has {available} nodes but {required} are required")]
    ClassTooSmall {
        class: usize,
        available: usize,
        required: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("all trials failed for {0}")]
    AllTrialsFailed(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
