//! Experiment runner for the meshfree mimetic divergence operator and the
//! virtual finite-volume scheme: convergence studies, Darcy benchmarks,
//! advection-diffusion tables, truncation errors and metric-solver scaling.

pub mod config;
pub mod expectations;
pub mod experiments;
pub mod norms;
pub mod output;
pub mod problems;

use mmd_core::MmdError;
use thiserror::Error;

pub use config::{Experiment, ExperimentConfig};
pub use experiments::{run, ExperimentReport};
pub use output::Output;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] MmdError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl BenchError {
    /// 3 for configuration problems, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) | BenchError::Core(MmdError::Config(_)) => 3,
            _ => 2,
        }
    }
}
