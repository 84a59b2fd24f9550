use thiserror::Error;

/// Failure of one CLI invocation, mapped to a process exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("simulation error: {0}")]
    Sim(#[from] homsim::Error),
    #[error("oracle check failed: {0}")]
    OracleFailed(String),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_SIM: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_ORACLE: i32 = 4;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_IO,
            CliError::Sim(_) => EXIT_SIM,
            CliError::OracleFailed(_) => EXIT_ORACLE,
        }
    }
}
