use thiserror::Error;

/// Failure categories, each with a fixed exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Traces(String),
    #[error("{0}")]
    Runtime(String),
    /// The run completed but a validation or audit verdict is negative.
    #[error("{0}")]
    Check(String),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Traces(_) => "traces",
            CliError::Runtime(_) => "runtime",
            CliError::Check(_) => "check",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) | CliError::Traces(_) | CliError::Runtime(_) => 1,
            CliError::Check(_) => 3,
        }
    }
}

impl From<geoprofit_core::Error> for CliError {
    fn from(e: geoprofit_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
