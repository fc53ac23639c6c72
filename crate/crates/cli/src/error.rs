use std::path::PathBuf;
use std::process::ExitCode;

use mira_core::MiraError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or unreadable / malformed input.
    #[error("{0}")]
    Usage(String),
    #[error("invalid input {path}: {source}")]
    Input { path: PathBuf, source: MiraError },
    #[error("computation failed: {0}")]
    Compute(#[from] MiraError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) | CliError::Input { .. } => ExitCode::from(2),
            CliError::Compute(_) | CliError::Io { .. } | CliError::Failed(_) => ExitCode::from(1),
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn input(path: impl Into<PathBuf>) -> impl FnOnce(MiraError) -> Self {
        let path = path.into();
        move |source| match source {
            // parse messages already name the file
            MiraError::Parse(msg) => CliError::Usage(msg),
            source => CliError::Input { path, source },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
