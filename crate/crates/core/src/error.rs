use thiserror::Error;

/// Every fallible operation in the crate reports through this type.
#[derive(Debug, Error)]
pub enum GbacError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("non-finite {component} at update {update}")]
    NonFinite { component: String, update: u64 },

    #[error("environment failure at step {step}: {detail}")]
    Env { step: u64, detail: String },

    #[error("frame error: {0}")]
    Frame(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("connection error: {0}")]
    Connection(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config digest mismatch: checkpoint has {expected}, config hashes to {found}")]
    DigestMismatch { expected: String, found: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GbacError>;

pub(crate) fn config_err(msg: impl Into<String>) -> GbacError {
    GbacError::Config(msg.into())
}
