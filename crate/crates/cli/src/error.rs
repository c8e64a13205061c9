use std::path::{Path, PathBuf};

use adk_core::error::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Validation(CoreError),
    #[error("solver failed: {0}")]
    Solver(CoreError),
    #[error("verification failed: {0}")]
    Mismatch(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Config(_) | CliError::Validation(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Mismatch(_) => 4,
        }
    }
}

/// Input problems map to exit code 2, numerical failures to 3.
impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidParams(_)
            | CoreError::Precondition(_)
            | CoreError::InfeasibleBudget { .. }
            | CoreError::DegenerateBudget(_)
            | CoreError::ControlOutOfSet { .. }
            | CoreError::Grid(_)
            | CoreError::NoPaths => CliError::Validation(e),
            _ => CliError::Solver(e),
        }
    }
}
