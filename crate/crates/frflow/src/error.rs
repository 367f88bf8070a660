use std::path::PathBuf;

use frflow_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{origin}:{line}:{column}: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Precondition(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for unreadable input, 3 for numerical failures, 4 for violated
    /// preconditions (including unusable paths).
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Parse { .. } => 2,
            Self::Core(e) if is_numerical(e) => 3,
            Self::Core(_) | Self::Precondition(_) | Self::Io { .. } => 4,
        }
    }
}

fn is_numerical(e: &CoreError) -> bool {
    matches!(
        e,
        CoreError::NonConvergence { .. }
            | CoreError::SingularSystem
            | CoreError::NumericalBlowup { .. }
            | CoreError::InvariantViolation(_)
    )
}

pub type Result<T> = std::result::Result<T, CliError>;
