use thiserror::Error;

/// Exit status of the `fsmt` binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Validation = 1,
    Runtime = 2,
    Dependency = 3,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error("{0}")]
    Dependency(String),

    #[error(transparent)]
    Core(#[from] fsmt_core::Error),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("stage {stage} failed: {source}")]
    Stage { stage: String, source: Box<CliError> },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        use fsmt_core::Error as E;
        match self {
            CliError::Validation(_) => ExitCode::Validation,
            CliError::Dependency(_) => ExitCode::Dependency,
            CliError::Core(E::Argument(_) | E::Config(_)) => ExitCode::Validation,
            CliError::Core(_) | CliError::Io { .. } => ExitCode::Runtime,
            CliError::Stage { source, .. } => source.exit_code(),
        }
    }
}
