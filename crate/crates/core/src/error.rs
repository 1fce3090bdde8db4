use thiserror::Error;

use crate::graph::NodeId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entries in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not Hermitian (relative asymmetry {0:e})")]
    NotHermitian(f64),

    #[error("columns are not orthonormal (‖XᴴX − I‖_F = {0:e})")]
    NotOrthonormal(f64),

    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("no edge between {0} and {1}")]
    UnknownEdge(NodeId, NodeId),

    #[error("message {0} -> {1} is missing from the store")]
    MissingMessage(NodeId, NodeId),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{source_name}:{line}: {msg}")]
    Parse {
        source_name: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
