//! Command-line harness: exact solves, single sampled runs, bound audits,
//! parameter sweeps and plot data.
//!
//! Exit codes: 0 on success, 2 on invalid input or configuration, 3 when
//! `check-bounds` finds a violated bound, 1 on I/O or internal failures.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod format;
pub mod plot;

pub use commands::dispatch;
pub use config::Config;
pub use experiment::{run_experiment, Environment, ExperimentSpec, GridPoint, ResultTable};
pub use plot::{emit_plot_data, Axis};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("{0} bound violation(s); smallest slack {1:e}")]
    BoundViolation(usize, f64),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] ampi_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Validation(_) => 2,
            CliError::Core(ampi_core::Error::InvalidArgument(_) | ampi_core::Error::InvalidInput(_)) => 2,
            CliError::BoundViolation(..) => 3,
            CliError::Io(_) | CliError::Core(_) => 1,
        }
    }
}
