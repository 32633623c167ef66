use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("record {index} out of bounds: {detail}")]
    Bounds { index: usize, detail: String },

    #[error("record {index}: self-loop on node {node} is not allowed in undirected mode")]
    SelfLoop { index: usize, node: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A single-element move would leave its source cluster empty; callers
    /// treat this as a merge instead.
    #[error("moving the last member out of cluster {cluster} would empty it")]
    EmptyCluster { cluster: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("event at t={timestamp} lies outside the binning window")]
    OutOfRange { timestamp: i64 },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
