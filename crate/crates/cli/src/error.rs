use std::fmt;
use std::io;

use heightformer_core::Error as CoreError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VERIFY_FAILED: i32 = 1;
    pub const INVALID_INPUT: i32 = 2;
    pub const MISSING_FILE: i32 = 3;
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn invalid(message: impl Into<String>) -> Self {
        Self { code: exit::INVALID_INPUT, message: message.into() }
    }

    pub fn missing(path: &std::path::Path) -> Self {
        Self { code: exit::MISSING_FILE, message: format!("file not found: {}", path.display()) }
    }

    /// Wraps an error from reading `path`.
    pub fn reading(path: &std::path::Path, err: CoreError) -> Self {
        match err {
            CoreError::Io(e) if e.kind() == io::ErrorKind::NotFound => Self::missing(path),
            other => Self::invalid(format!("{}: {other}", path.display())),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        match err {
            CoreError::Io(e) if e.kind() == io::ErrorKind::NotFound => {
                Self { code: exit::MISSING_FILE, message: e.to_string() }
            }
            other => Self::invalid(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(err: io::Error) -> Self {
        CoreError::Io(err).into()
    }
}

pub type CliResult<T> = Result<T, CliError>;
