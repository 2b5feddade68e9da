//! IO companion to `mmbeam-core`: on-disk dataset format, run configuration,
//! run manifests, a threaded task pool, and the command implementations
//! behind the `mmbeam` binary.

pub mod commands;
pub mod config;
pub mod dataio;
pub mod manifest;
pub mod pool;

/// Process exit codes: 0 success, 2 usage/config error, 3 data error.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad configuration, missing files named by configuration.
    Usage(String),
    /// Present but malformed or inconsistent data.
    Data(String),
    /// Unexpected internal failure.
    Internal(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Internal(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Data(msg) => write!(f, "{msg}"),
            CliError::Internal(err) => write!(f, "{err:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(err: anyhow::Error) -> Self {
        CliError::Internal(err)
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Internal(err.into())
    }
}
