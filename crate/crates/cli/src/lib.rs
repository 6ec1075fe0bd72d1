//! Command-line front end: configuration, data files, inference runs,
//! validation suites and run artifacts.

pub mod cli;
pub mod config;
pub mod data;
pub mod infer;
pub mod output;
pub mod validate;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("validation failed: {0}")]
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Runtime(_) => 2,
            Self::Validation(_) => 3,
        }
    }
}

impl From<abc_smc2::Error> for CliError {
    fn from(e: abc_smc2::Error) -> Self {
        match e {
            abc_smc2::Error::InvalidConfig(_) | abc_smc2::Error::UnknownModel(_) => Self::Config(e.to_string()),
            other => Self::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(format!("io error: {e}"))
    }
}
