use std::path::Path;

use thiserror::Error;

/// Failures mapped onto process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("acceptance failure: {0}")]
    Acceptance(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Acceptance(_) => 3,
        }
    }
}

impl From<gbc_core::Error> for CliError {
    fn from(e: gbc_core::Error) -> Self {
        use gbc_core::Error as E;
        match e {
            E::Argument(_) | E::Domain(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}
