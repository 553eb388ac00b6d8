use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Core(#[from] risnoma_core::Error),
    #[error("invalid environment config: {0}")]
    Config(String),
    #[error("action does not match the environment: {0}")]
    Action(String),
    #[error("step called before reset")]
    NotReset,
}

pub type Result<T> = std::result::Result<T, EnvError>;
