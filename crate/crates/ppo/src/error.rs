use thiserror::Error;

/// Failure reported by an environment during training.
pub type EnvFailure = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("environment failed: {0}")]
    Env(EnvFailure),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PpoError>;
