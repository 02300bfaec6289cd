use std::path::PathBuf;

use steer_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{} already exists (use --force to overwrite)", .0.display())]
    Exists(PathBuf),
    #[error("{0}")]
    Config(String),
}

pub type CliResult<T> = Result<T, CliError>;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;
pub const EXIT_IO: u8 = 4;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for configuration problems, 3 for numeric failures, 4 for I/O
    /// and file-format problems.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Io { .. } | Self::Exists(_) => EXIT_IO,
            Self::Config(_) => EXIT_CONFIG,
            Self::Core(e) => match e {
                Error::Io(_) | Error::Corrupt { .. } | Error::VersionMismatch { .. } => EXIT_IO,
                Error::NonFiniteLoss { .. }
                | Error::NonFiniteGradient(_)
                | Error::NegativeVariance(_)
                | Error::NonFinite(_)
                | Error::TooFewSamples { .. } => EXIT_NUMERIC,
                _ => EXIT_CONFIG,
            },
        }
    }
}
