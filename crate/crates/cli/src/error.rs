//! Failure type that fixes the process exit code.
//!
//! Bad invocations and invalid configuration inputs exit with 1; a run
//! that fails after a well-formed invocation exits with 2. Success is 0.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// The invocation, its flags or its configuration inputs are wrong.
    Usage(String),
    /// The command itself failed while running.
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Runtime(err) => write!(f, "{err:#}"),
        }
    }
}

/// Shorthand for a usage-class failure.
pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Shorthand for a runtime-class failure.
pub fn runtime(err: impl Into<anyhow::Error>) -> CliError {
    CliError::Runtime(err.into())
}
