use coshare_core::datamodel::DataError;

/// Failure categories, each with its own exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("error[usage]: {0}")]
    Usage(String),
    #[error("error[data]: {0}")]
    Data(String),
    #[error("error[no-input]: {0}")]
    NoInput(String),
    #[error("error[protocol]: {0}")]
    Protocol(String),
    #[error("error[cant-create]: {0}")]
    CantCreate(String),
    #[error("error[internal]: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 64,
            CliError::Data(_) => 65,
            CliError::NoInput(_) => 66,
            CliError::Protocol(_) => 69,
            CliError::Internal(_) => 70,
            CliError::CantCreate(_) => 73,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io { .. } => CliError::NoInput(e.to_string()),
            DataError::InvalidParams(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}
