//! Config-driven experiment runner around the `pathgreeks` estimators.

pub mod config;
pub mod runner;

pub use config::ExperimentConfig;
pub use runner::{classify, dump_paths, run, RunSummary};

/// Failure classes, each with its own process exit code.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<pathgreeks::Error> for CliError {
    fn from(e: pathgreeks::Error) -> Self {
        use pathgreeks::Error as E;
        match e {
            E::NonFinite { .. } | E::NonPositiveVolatility { .. } | E::Evaluation(_) => CliError::Numerical(e.to_string()),
            E::InvalidParameter { .. }
            | E::GridMismatch { .. }
            | E::AllocationConstraint { .. }
            | E::Empty(_)
            | E::Parse(_) => CliError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
