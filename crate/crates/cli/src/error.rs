use thiserror::Error;

/// Failure of a command, carrying its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{op} failed: {source}")]
    Numerical {
        op: &'static str,
        source: mmiq_core::Error,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical { .. } => 3,
            CliError::Io(_) => 1,
        }
    }
}

/// Tags a library error with the operation that produced it.
pub trait Context<T> {
    fn during(self, op: &'static str) -> Result<T, CliError>;
}

impl<T> Context<T> for mmiq_core::Result<T> {
    fn during(self, op: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Numerical { op, source })
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
