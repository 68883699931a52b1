//! Truncation error of the meshless divergence on the perforated square for
//! the uniform and multiresolution volume schemes.

use mmd_core::geometry::{BcSpec, BcTag, Domain};
use mmd_core::mmd::{sinusoidal_divergence, sinusoidal_field};

use super::{ExperimentReport, SolverStat};
use crate::config::{Experiment, ExperimentConfig};
use crate::norms::{ErrorRow, ErrorTable};
use crate::output::Output;
use crate::problems::{meshless_config, meshless_setup};
use crate::BenchError;

pub const TRUNCATION_COLUMNS: [&str; 4] = ["trunc_rel", "trunc_sum", "trunc_mu", "trunc_max"];

pub fn run_truncation(
    cfg: &ExperimentConfig,
    _out: &Output,
) -> Result<ExperimentReport, BenchError> {
    let mut report = ExperimentReport::new(Experiment::Truncation, false);
    let domain = Domain::perforated_square();
    for scheme in cfg.volumes.schemes() {
        let mcfg = meshless_config(cfg, scheme, false);
        let mut table = ErrorTable::new(scheme.name(), &TRUNCATION_COLUMNS);
        for &n in &cfg.sizes {
            let setup = meshless_setup(
                &domain,
                n,
                &BcSpec::uniform(BcTag::Neumann),
                cfg.perturbation,
                cfg.seed,
                &mcfg,
            )?;
            let t = setup
                .op
                .truncation_error(&sinusoidal_field, &sinusoidal_divergence)?;
            table.push(ErrorRow {
                n,
                points: setup.op.len(),
                h: setup.cloud.fill_distance,
                values: vec![
                    Some(t.relative),
                    Some(t.l2),
                    Some(t.l2_weighted),
                    Some(t.max),
                ],
                iterations: setup.metric_iterations().round() as usize,
                seconds: setup.seconds,
                converged: true,
            });
            report.stats.push(SolverStat {
                case: format!("metric-{}", scheme.name()),
                n,
                points: setup.op.len(),
                solver: "pcg-amg",
                iterations: setup.metric_iterations(),
                seconds: setup.seconds,
                relative_residual: setup
                    .op
                    .metric_reports
                    .iter()
                    .map(|r| r.relative_residual)
                    .fold(0.0, f64::max),
                converged: true,
            });
            log::info!(
                "{} N = {n}: relative truncation {:.4e}",
                scheme.name(),
                t.relative
            );
        }
        if let Some(fit) = table.rate("trunc_rel") {
            report.summary.push(format!(
                "{} volumes: truncation rate {:.3} over {} sizes",
                scheme.name(),
                fit.rate,
                fit.rows_used
            ));
        }
        report.tables.push(table);
    }
    Ok(report)
}
