//! Scenario orchestration for the `dce` command: configuration, backend
//! runs across a worker pool, and CSV/JSON emission.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod report;
pub mod scenarios;

pub use config::{Pipeline, ScenarioConfig};
pub use report::{Cell, RunReport, Table};
pub use scenarios::{
    run_crosscheck, run_entropy_sweep, run_field_oracle, run_fock_oracle, run_gaussian_study, run_pipeline,
    run_resonance_study,
};

use dce_core::DceError;

/// Failure of a run, mapped onto the process exit status.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("regime violation: {0}")]
    Regime(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("output error: {0}")]
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Io(_) => 2,
            RunError::Regime(_) => 3,
            RunError::Numerical(_) => 4,
        }
    }
}

/// Exit status for a crosscheck whose backends disagree.
pub const EXIT_CROSSCHECK_FAILED: i32 = 5;

impl From<DceError> for RunError {
    fn from(e: DceError) -> Self {
        match e {
            DceError::Config(m) => RunError::Config(m),
            DceError::Regime(m) => RunError::Regime(m),
            other => RunError::Numerical(other.to_string()),
        }
    }
}
