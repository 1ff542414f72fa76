use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("{}: missing required column '{column}'", path.display())]
    MissingColumn { path: PathBuf, column: &'static str },

    #[error("{}: unsupported model version {found} (expected {expected})", path.display())]
    ModelVersion { path: PathBuf, found: u32, expected: u32 },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] road_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// 2 for bad input, 3 for numerical failures inside the pipeline.
    pub fn exit_code(&self) -> i32 {
        use road_core::Error as E;
        match self {
            Self::Core(
                E::NotPositiveDefinite
                | E::NonFinite(_)
                | E::ZeroDirection
                | E::NonPositiveEigenvalue { .. }
                | E::DegenerateDirection { .. }
                | E::NoKktCandidate,
            ) => 3,
            _ => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
