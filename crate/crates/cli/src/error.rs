use std::process::ExitCode;

use serde::Serialize;
use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{message}")]
    Config { operation: String, message: String },

    #[error("{source}")]
    Io { module: &'static str, operation: &'static str, source: qfrac::Error },

    #[error("{source}")]
    Compute { module: &'static str, operation: &'static str, source: qfrac::Error },

    #[error("{failed} of {total} checks failed")]
    Verification { suite: String, failed: usize, total: usize },
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    module: &'a str,
    operation: &'a str,
    message: String,
}

#[derive(Serialize)]
struct ErrorObject<'a> {
    error: ErrorBody<'a>,
}

impl CliError {
    pub fn config(operation: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config { operation: operation.into(), message: message.into() }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config { .. } => 2,
            CliError::Io { .. } => 3,
            CliError::Compute { .. } => 4,
            CliError::Verification { .. } => 5,
        })
    }

    /// `{"error": {"kind", "module", "operation", "message"}}` on one line.
    pub fn to_json(&self) -> String {
        let message = self.to_string();
        let body = match self {
            CliError::Config { operation, .. } => {
                ErrorBody { kind: "ConfigError", module: "cli", operation, message }
            }
            CliError::Io { module, operation, source } | CliError::Compute { module, operation, source } => {
                ErrorBody { kind: source.kind(), module, operation, message }
            }
            CliError::Verification { suite, .. } => {
                ErrorBody { kind: "VerificationFailed", module: "cli", operation: suite, message }
            }
        };
        serde_json::to_string(&ErrorObject { error: body }).expect("error object serializes")
    }
}

/// Maps a library error from a computation. File and parse failures keep
/// their io classification.
pub fn compute(module: &'static str, operation: &'static str) -> impl FnOnce(qfrac::Error) -> CliError {
    move |source| match source {
        qfrac::Error::Io(_) | qfrac::Error::Parse(_) => CliError::Io { module, operation, source },
        _ => CliError::Compute { module, operation, source },
    }
}

/// Maps a library error from reading or writing a file.
pub fn io(module: &'static str, operation: &'static str) -> impl FnOnce(qfrac::Error) -> CliError {
    move |source| CliError::Io { module, operation, source }
}

pub fn write_failed(e: std::io::Error) -> CliError {
    CliError::Io { module: "cli", operation: "write_output", source: e.into() }
}
