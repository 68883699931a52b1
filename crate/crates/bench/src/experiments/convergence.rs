//! Pure Dirichlet and pure Neumann diffusion with `u = sin 2πx sin 2πy` on
//! the perforated square.

use mmd_core::fvm::{AdvectiveMode, ProblemData};
use mmd_core::geometry::{BcSpec, BcTag, CoefficientField, Domain};
use mmd_core::Point;

use super::{ExperimentReport, SolverStat};
use crate::config::{BcMode, Experiment, ExperimentConfig};
use crate::norms::{error_norms, ErrorNorms, ErrorRow, ErrorTable};
use crate::output::Output;
use crate::problems::{
    meshless_config, meshless_setup, run_fv, sin_sin, sin_sin_grad, sin_sin_neg_laplacian,
    solver_config, weighted_mean,
};
use crate::BenchError;

pub fn run_convergence(
    cfg: &ExperimentConfig,
    out: &Output,
) -> Result<ExperimentReport, BenchError> {
    let mut report = ExperimentReport::new(Experiment::Convergence, false);
    let domain = Domain::perforated_square();
    let tags: &[BcTag] = match cfg.bc {
        BcMode::Dirichlet => &[BcTag::Dirichlet],
        BcMode::Neumann => &[BcTag::Neumann],
        BcMode::Both => &[BcTag::Dirichlet, BcTag::Neumann],
    };
    let mcfg = meshless_config(cfg, Default::default(), true);
    let coeff = CoefficientField::constant(1.0, Point::new(0.0, 0.0));
    let neumann = |c: Point, n: Point| sin_sin_grad(c).dot(n);
    let data = ProblemData {
        source: &sin_sin_neg_laplacian,
        dirichlet: &sin_sin,
        neumann: &neumann,
        outflow: &|_| false,
    };
    for &tag in tags {
        let case = match tag {
            BcTag::Dirichlet => "dirichlet",
            BcTag::Neumann => "neumann",
        };
        let mut table = ErrorTable::new(case, &ErrorNorms::COLUMNS);
        for &n in &cfg.sizes {
            let setup = meshless_setup(
                &domain,
                n,
                &BcSpec::uniform(tag),
                cfg.perturbation,
                cfg.seed,
                &mcfg,
            )?;
            let op = &setup.op;
            let run = run_fv(
                op,
                &coeff,
                AdvectiveMode::Upwind,
                cfg.mean.into(),
                &data,
                &solver_config(cfg),
            )?;
            let mut exact: Vec<f64> = op.points.iter().map(|&p| sin_sin(p)).collect();
            if tag == BcTag::Neumann {
                // the bordered solve returns the μ-weighted zero-mean solution
                let m = weighted_mean(&exact, &op.volumes.mu);
                exact.iter_mut().for_each(|v| *v -= m);
            }
            let exact_flux: Vec<Point> = op.points.iter().map(|&p| sin_sin_grad(p)).collect();
            let norms = error_norms(
                &run.solution.u,
                &exact,
                &run.flux,
                &exact_flux,
                &run.disc.config.epsilon,
                &op.volumes.mu,
            );
            let rep = &run.solution.report;
            if !rep.converged {
                report.failures.push(format!(
                    "{case} N = {n}: no convergence after {} iterations",
                    rep.iterations
                ));
            }
            table.push(ErrorRow {
                n,
                points: op.len(),
                h: setup.cloud.fill_distance,
                values: norms.values().into_iter().map(Some).collect(),
                iterations: rep.iterations,
                seconds: setup.seconds + run.seconds,
                converged: rep.converged,
            });
            report.stats.push(SolverStat {
                case: case.into(),
                n,
                points: op.len(),
                solver: if run.system.constraint.is_some() {
                    "bordered"
                } else {
                    "bicgstab-ilu0"
                },
                iterations: rep.iterations as f64,
                seconds: rep.seconds,
                relative_residual: rep.relative_residual,
                converged: rep.converged,
            });
            if cfg.dump_solutions {
                out.solution(
                    &format!("solution_N{n}_{case}"),
                    &op.points,
                    &run.solution.u,
                    &run.flux,
                )?;
            }
            log::info!(
                "{case} N = {n}: l2_rel {:.4e}, h1_rel {:.4e}",
                norms.l2_relative,
                norms.h1_relative
            );
        }
        for col in ["l2_rel", "h1_rel"] {
            if let Some(fit) = table.rate(col) {
                report.summary.push(format!(
                    "{case} {col} rate {:.3} over {} sizes",
                    fit.rate, fit.rows_used
                ));
            }
        }
        report.tables.push(table);
    }
    Ok(report)
}
