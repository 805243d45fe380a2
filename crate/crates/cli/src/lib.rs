//! Command-line front end: scenario files, the seed runner and analytic
//! bounds.

pub mod bounds;
pub mod runner;
pub mod scenario;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    /// A run broke a safety invariant the protocol should guarantee.
    #[error("invariant violated: {0}")]
    Violation(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Violation(_) => 3,
            CliError::Runtime(_) | CliError::Io(_) => 1,
        }
    }
}
