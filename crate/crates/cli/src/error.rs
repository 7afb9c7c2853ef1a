use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, missing paths or an invalid pipeline config.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("no ground truth for prediction `{0}`")]
    MissingPair(String),

    #[error("{failed} of {total} files failed")]
    Failures { failed: usize, total: usize },

    #[error(transparent)]
    Core(#[from] mvlidarnet::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Core(mvlidarnet::Error::InvalidConfig(_)) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
