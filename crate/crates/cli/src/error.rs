use cpla_core::formats::FormatError;
use cpla_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments or invalid input data; exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Everything else; exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn is_validation(e: &Error) -> bool {
    !matches!(
        e,
        Error::DeltaOverflow { .. } | Error::EmptyPool | Error::NoPositives | Error::TubeTooShort(_)
    )
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if is_validation(&e) {
            CliError::Usage(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        let validation = match &e {
            FormatError::Invalid { source, .. } => is_validation(source),
            other => other.is_validation(),
        };
        if validation {
            CliError::Usage(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}
