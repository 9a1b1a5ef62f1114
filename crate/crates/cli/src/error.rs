use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or a bad configuration file.
    #[error("usage: {0}")]
    Usage(String),

    /// An input changed after the artifact that depends on it was written.
    #[error("stale input: {0}")]
    Stale(String),

    #[error("missing artifact: {0}")]
    Missing(String),

    #[error(transparent)]
    Core(#[from] factprobe::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_TRAINING: i32 = 3;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(factprobe::Error::Config(_)) => EXIT_USAGE,
            CliError::Core(factprobe::Error::Divergence { .. }) => EXIT_TRAINING,
            _ => EXIT_DATA,
        }
    }
}
