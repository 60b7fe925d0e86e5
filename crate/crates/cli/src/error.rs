use thiserror::Error;

/// Failure of a CLI run. Check failures are not errors; they are reported
/// in the output and mapped to exit code 1 by the caller.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Numerical(#[from] nchj::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// `2` for configuration problems, `3` for numerical or I/O failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(e) => match e {
                nchj::Error::InvalidParameter(_)
                | nchj::Error::KernelNotNormalized { .. }
                | nchj::Error::Undersampled { .. }
                | nchj::Error::WindowTooSmall { .. }
                | nchj::Error::WeakRegime { .. } => 2,
                _ => 3,
            },
            CliError::Io(_) | CliError::Json(_) => 3,
        }
    }
}

pub(crate) fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub type CliResult<T> = std::result::Result<T, CliError>;
