//! Harness-level errors with the exit codes the binary reports.

use rtnet_core::CoreError;
use thiserror::Error;

/// Errors surfaced by the CLI; each maps to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration, flags, or input files: exit code 1.
    #[error("configuration error: {0}")]
    Config(String),
    /// Runtime or numerical failure mid-run: exit code 2.
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        match err {
            CoreError::Config(m) | CoreError::Usage(m) => CliError::Config(m),
            CoreError::Numeric(m) => CliError::Runtime(m),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Runtime(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
