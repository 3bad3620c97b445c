//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("newick syntax error at byte {position}: {message}")]
    NewickSyntax { position: usize, message: String },

    #[error("leaf '{leaf}' is at depth {depth} (root-to-leaf depth must be 1)")]
    DepthViolation { leaf: String, depth: f64 },

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("unknown leaf index {0}")]
    UnknownLeaf(usize),

    #[error("leaf {0} must not appear in the conditioning set")]
    LeafInConditioningSet(usize),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("likelihood evaluation failed: {0}")]
    Likelihood(String),

    #[error("malformed data: {0}")]
    DataFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
