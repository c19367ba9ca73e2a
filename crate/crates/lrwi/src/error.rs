use std::path::PathBuf;

/// Failures of the command-line layer, each mapped to an exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Numerical(#[from] lrwi_core::Error),
    /// A check ran to completion and failed its tolerance.
    #[error("{0}")]
    Check(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        CliError::Parse { path: path.into(), line, message: message.into() }
    }

    /// 1 for numerical failures, 2 for configuration and input problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(lrwi_core::Error::Config(_)) => 2,
            CliError::Numerical(_) | CliError::Check(_) => 1,
            CliError::Io { .. } | CliError::Parse { .. } | CliError::Config(_) => 2,
        }
    }
}
