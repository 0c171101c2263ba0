use std::path::PathBuf;

use thiserror::Error;

/// Usage errors, following the BSD `sysexits` convention.
pub const EXIT_USAGE: i32 = 64;
/// A check exceeded its tolerance.
pub const EXIT_VERDICT: i32 = 2;
/// Resource exhaustion or a numerical routine that did not converge.
pub const EXIT_RESOURCE: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config {path}: line {line}, column {column}, field `{field}`: {message}")]
    Config { path: String, line: usize, column: usize, field: String, message: String },

    #[error("invalid value for `{field}`: {message}")]
    Field { field: String, message: String },

    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },

    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },

    #[error("worker pool: {0}")]
    Pool(String),

    #[error(transparent)]
    Core(#[from] martin_core::Error),
}

impl CliError {
    pub fn field(field: &str, message: impl Into<String>) -> Self {
        CliError::Field { field: field.to_string(), message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        use martin_core::Error as E;
        match self {
            CliError::Config { .. } | CliError::Field { .. } | CliError::Read { .. } => EXIT_USAGE,
            CliError::Write { .. } | CliError::Pool(_) => EXIT_RESOURCE,
            CliError::Core(e) => match e {
                E::Parse(_) | E::Parameter(_) | E::InvalidWalk(_) | E::Representation(_) | E::Unsupported(_) => {
                    EXIT_USAGE
                }
                E::BallCap { .. }
                | E::TransienceUnverified(_)
                | E::Precision { .. }
                | E::Range(_)
                | E::Convergence(_)
                | E::Partition { .. }
                | E::Sampling(_) => EXIT_RESOURCE,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
