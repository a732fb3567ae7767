use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: u8 = 0;
pub const EXIT_OTHER: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_SIZING: u8 = 3;
pub const EXIT_NO_DETECTION: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid scenario, with the offending field named in the message.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] ttdsim::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(ttdsim::Error::Config(_)) => EXIT_CONFIG,
            CliError::Core(ttdsim::Error::Sizing { .. }) => EXIT_SIZING,
            CliError::Core(ttdsim::Error::NoDetection { .. }) => EXIT_NO_DETECTION,
            _ => EXIT_OTHER,
        }
    }
}
