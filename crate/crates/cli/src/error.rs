use std::fmt;

use apnet_core::Error as CoreError;

/// Process exit status for each failure class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Parse = 2,
    Domain = 3,
    Format = 4,
    Internal = 5,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ExitKind, message: impl Into<String>) -> Self {
        Self { kind, message: message.into() }
    }

    pub fn parse(message: impl Into<String>) -> Self {
        Self::new(ExitKind::Parse, message)
    }

    pub fn format(message: impl Into<String>) -> Self {
        Self::new(ExitKind::Format, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ExitKind::Internal, message)
    }

    /// Wraps a library error, prefixing the record or file it came from.
    pub fn core(context: impl fmt::Display, e: CoreError) -> Self {
        Self::new(classify(&e), format!("{context}: {e}"))
    }

    pub fn exit_code(&self) -> u8 {
        self.kind as u8
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

fn classify(e: &CoreError) -> ExitKind {
    match e {
        CoreError::Config(_) => ExitKind::Parse,
        CoreError::Format(_) | CoreError::HeaderMismatch(_) => ExitKind::Format,
        CoreError::Io(_) => ExitKind::Internal,
        _ => ExitKind::Domain,
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
