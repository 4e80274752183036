//! Experiment configuration, Monte Carlo drivers, diagnostics and report
//! output for the command line tool. Everything here works in `f64`.
//!
//! Pass gates (4 standard errors, strictly decreasing medians, a max/min
//! ratio of 4) are policy choices for finite samples and are written into
//! every report next to the numbers they judge.

pub mod config;
pub mod experiments;
pub mod oracle;
pub mod output;
pub mod report;

use thiserror::Error;

pub use config::{ConfigEntries, ExperimentConfig, Threads};
pub use experiments::{
    diag_atoms, diag_mean_ell, diag_neg_moments, diag_recursion, realizations, run_diagnostics, run_kpz_experiment,
};
pub use oracle::{enumerate_oracle, OracleMoments};
pub use report::{Check, ExperimentReport, Provenance};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("{failures} of {total} realizations failed, more than the tolerated 20%")]
    TooManyFailures { failures: usize, total: usize },
    #[error(transparent)]
    Weight(#[from] crate::weights::WeightError),
    #[error(transparent)]
    Set(#[from] crate::fractal_sets::SetError),
    #[error(transparent)]
    Cascade(#[from] crate::cascade::CascadeError),
    #[error(transparent)]
    Dimension(#[from] crate::dimension::DimensionError),
    #[error(transparent)]
    Frostman(#[from] crate::frostman::FrostmanError),
    #[error(transparent)]
    Kpz(#[from] crate::kpz::KpzError),
}

impl HarnessError {
    /// Process exit status: 2 for bad input, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Weight(_) | HarnessError::Set(_) => 2,
            HarnessError::Kpz(crate::kpz::KpzError::OutOfRange { .. } | crate::kpz::KpzError::InvalidModel(_)) => 2,
            _ => 1,
        }
    }
}
