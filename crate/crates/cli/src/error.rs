//! Driver-level errors with a stable machine-readable kind, emitted as JSON
//! on standard error.

use std::fmt;

use serde::Serialize;

#[derive(Debug)]
pub enum CliError {
    /// Bad command line.
    Usage(String),
    /// Config file cannot be read, parsed, or validated.
    Config(String),
    /// A numerical component rejected the run.
    Core(curlvar_core::Error),
    /// The command's own preconditions failed.
    Run(String),
    /// Artifact emission failed.
    Io(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Core(_) => "core",
            CliError::Run(_) => "run",
            CliError::Io(_) => "io",
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m)
            | CliError::Config(m)
            | CliError::Run(m)
            | CliError::Io(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<curlvar_core::Error> for CliError {
    fn from(e: curlvar_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: String,
}

#[derive(Serialize)]
struct ErrorEnvelope<'a> {
    error: ErrorBody<'a>,
}

/// One-line JSON rendering for standard error.
pub fn error_json(err: &CliError) -> String {
    serde_json::to_string(&ErrorEnvelope {
        error: ErrorBody {
            kind: err.kind(),
            message: err.to_string(),
        },
    })
    .expect("error envelope serializes")
}
