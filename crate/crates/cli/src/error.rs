use thiserror::Error;

/// Command failures, each with a fixed process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical poison: {0}")]
    Poison(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Poison(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<kbe_core::Error> for CliError {
    fn from(e: kbe_core::Error) -> Self {
        match e {
            kbe_core::Error::Poisoned { .. } => CliError::Poison(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
