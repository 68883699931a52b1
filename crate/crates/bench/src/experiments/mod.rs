//! Experiment drivers and the common report they return.

mod advection;
mod convergence;
mod darcy;
mod oracle;
mod scaling;
mod truncation;

pub use advection::{run_advection, run_skew_advection, skew_advection, SkewResult};
pub use convergence::run_convergence;
pub use darcy::{
    five_spot, five_strip, run_five_spot, run_five_strip, run_two_strip, two_strip, FiveSpotResult,
    FiveStripResult, TwoStripResult,
};
pub use oracle::{compare_with_oracle, linear_exactness, run_oracle, OracleComparison};
pub use scaling::{metric_scaling, run_solver_scaling, ScalingRow};
pub use truncation::{run_truncation, TRUNCATION_COLUMNS};

/// Five-strip diffusivities from bottom to top.
pub fn darcy_strip_epsilon() -> [f64; 5] {
    darcy::FIVE_STRIP_EPSILON
}

use mmd_core::linalg::SolveReport;
use serde::Serialize;

use crate::config::{Experiment, ExperimentConfig};
use crate::norms::{write_errors_csv, write_rates_csv, ErrorTable};
use crate::output::Output;
use crate::BenchError;

/// One linear solve (or the mean over a group of solves).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverStat {
    pub case: String,
    pub n: usize,
    pub points: usize,
    pub solver: &'static str,
    pub iterations: f64,
    pub seconds: f64,
    pub relative_residual: f64,
    pub converged: bool,
}

impl SolverStat {
    pub fn from_report(
        case: impl Into<String>,
        n: usize,
        points: usize,
        solver: &'static str,
        rep: &SolveReport,
    ) -> Self {
        Self {
            case: case.into(),
            n,
            points,
            solver,
            iterations: rep.iterations as f64,
            seconds: rep.seconds,
            relative_residual: rep.relative_residual,
            converged: rep.converged,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub experiment: Experiment,
    pub tables: Vec<ErrorTable>,
    pub stats: Vec<SolverStat>,
    /// Human-readable result lines.
    pub summary: Vec<String>,
    /// Solver failures; fatal unless the experiment expects non-convergence.
    pub failures: Vec<String>,
    pub nc_tolerant: bool,
}

impl ExperimentReport {
    pub fn new(experiment: Experiment, nc_tolerant: bool) -> Self {
        Self {
            experiment,
            tables: Vec::new(),
            stats: Vec::new(),
            summary: Vec::new(),
            failures: Vec::new(),
            nc_tolerant,
        }
    }

    pub fn table(&self, case: &str) -> Option<&ErrorTable> {
        self.tables.iter().find(|t| t.case == case)
    }

    pub fn exit_code(&self) -> i32 {
        if !self.nc_tolerant && !self.failures.is_empty() {
            2
        } else {
            0
        }
    }

    fn write_files(&self, cfg: &ExperimentConfig, out: &Output) -> Result<(), BenchError> {
        out.write("config.json", |w| {
            serde_json::to_writer_pretty(&mut *w, cfg)
                .map_err(|e| BenchError::Config(e.to_string()))?;
            writeln!(w)?;
            Ok(())
        })?;
        if !self.tables.is_empty() {
            out.write("errors.csv", |w| write_errors_csv(w, &self.tables))?;
            out.write("rates.csv", |w| write_rates_csv(w, &self.tables))?;
        }
        if !self.stats.is_empty() {
            out.write("solver_stats.csv", |w| {
                let mut c = csv::Writer::from_writer(w);
                for s in &self.stats {
                    c.serialize(s)?;
                }
                c.flush()?;
                Ok(())
            })?;
        }
        Ok(())
    }
}

/// Validates the configuration, runs the experiment and writes the tables.
pub fn run(cfg: &ExperimentConfig, out: &Output) -> Result<ExperimentReport, BenchError> {
    cfg.validate()?;
    log::info!("running {} on N = {:?}", cfg.experiment.name(), cfg.sizes);
    let report = match cfg.experiment {
        Experiment::Convergence => run_convergence(cfg, out)?,
        Experiment::TwoStrip => run_two_strip(cfg, out)?,
        Experiment::FiveStrip => run_five_strip(cfg, out)?,
        Experiment::FiveSpot => run_five_spot(cfg, out)?,
        Experiment::Advection => run_advection(cfg, out)?,
        Experiment::SkewAdvection => run_skew_advection(cfg, out)?,
        Experiment::Truncation => run_truncation(cfg, out)?,
        Experiment::SolverScaling => run_solver_scaling(cfg, out)?,
        Experiment::Oracle => run_oracle(cfg, out)?,
    };
    report.write_files(cfg, out)?;
    Ok(report)
}
