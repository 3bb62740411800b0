use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] toe_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }

    /// Process exit code: 2 config, 3 infeasible instance, 4 IO.
    pub fn exit_code(&self) -> i32 {
        use toe_core::Error as E;
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Core(E::InvalidFabric(_) | E::InvalidArgument(_) | E::Dimension(_)) => 2,
            HarnessError::Core(_) => 3,
            HarnessError::Io { .. } => 4,
        }
    }
}
