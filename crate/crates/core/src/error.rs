use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid node id {node} (graph has {num_nodes} nodes)")]
    InvalidNode { node: usize, num_nodes: usize },

    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("missing embedding for node {0}")]
    MissingEmbedding(usize),

    #[error("summarizer backend error (status {status:?}): {message}")]
    Backend {
        status: Option<u16>,
        message: String,
    },

    #[error("missing artifact {path}: run `{producing_command}` first")]
    MissingArtifact {
        path: PathBuf,
        producing_command: String,
    },

    #[error("checksum mismatch for {path}: manifest {expected}, found {actual}")]
    ChecksumMismatch {
        path: PathBuf,
        expected: String,
        actual: String,
    },

    #[error("config hash mismatch in run dir (expected {expected}, found {actual}); pass --force to override")]
    ConfigHashMismatch { expected: String, actual: String },

    #[error("run directory {0} is locked by another command")]
    RunDirLocked(PathBuf),

    #[error("model is frozen; parameters cannot be mutated")]
    Frozen,

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
