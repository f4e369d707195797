use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}
