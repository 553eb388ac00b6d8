use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown scheme `{given}`; choose one of: {choices}")]
    UnknownScheme { given: String, choices: String },
    #[error("`{given}` cannot be swept; choose one of: {choices}")]
    NotSweepable { given: String, choices: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] risnoma_env::EnvError),
    #[error(transparent)]
    Core(#[from] risnoma_core::Error),
    #[error(transparent)]
    Ppo(#[from] risnoma_ppo::PpoError),
    #[error("agent environment failed: {0}")]
    Agent(risnoma_ppo::EnvFailure),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;
