use std::fmt;
use std::path::Path;

use gig_core::GigError;

/// A failure carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    /// Missing files, malformed input, schema or arity mismatch (exit 2).
    Input(String),
    /// Residuals or audit checks outside tolerance, failed rows (exit 1).
    Tolerance(String),
    /// Corner radix above the configured maximum (exit 3).
    Capacity(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Tolerance(_) => 1,
            CliError::Input(_) => 2,
            CliError::Capacity(_) => 3,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Input(format!("{}: {err}", path.display()))
    }

    pub fn from_core_at(path: &Path, err: GigError) -> Self {
        match CliError::from(err) {
            CliError::Input(msg) => CliError::Input(format!("{}: {msg}", path.display())),
            other => other,
        }
    }
}

impl From<GigError> for CliError {
    fn from(err: GigError) -> Self {
        match err {
            GigError::RadixOverflow { .. } | GigError::TooManyPlayers { .. } => CliError::Capacity(err.to_string()),
            GigError::NonFinite(_) | GigError::OnThreshold { .. } => CliError::Tolerance(err.to_string()),
            _ => CliError::Input(err.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Tolerance(m) | CliError::Capacity(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}
