use dskf_core::Error as CoreError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{failed} of {total} cells failed")]
    PartialFailure { failed: usize, total: usize },
    #[error("results container holds no successful runs")]
    NoRuns,
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::NoRuns => EXIT_USAGE,
            CliError::PartialFailure { .. } => EXIT_NUMERICAL,
            CliError::Core(e) => match e {
                CoreError::Io { .. }
                | CoreError::Format { .. }
                | CoreError::Dimension(_)
                | CoreError::Version { .. }
                | CoreError::Checksum { .. }
                | CoreError::Serde(_) => EXIT_IO,
                CoreError::Numerical { .. } | CoreError::DegenerateStep { .. } => EXIT_NUMERICAL,
                _ => EXIT_USAGE,
            },
        }
    }
}
