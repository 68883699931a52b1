//! Advection-diffusion on the unit square with `a = (1, 2)` and
//! `ε = ‖a‖ / Pe`: manufactured convergence tables and the skew test with a
//! discontinuous inflow profile.

use std::f64::consts::PI;

use mmd_core::fvm::{AdvectiveMode, ProblemData};
use mmd_core::geometry::{BcSpec, BcTag, BoundaryPart, CoefficientField, Domain};
use mmd_core::linalg::SolveReport;
use mmd_core::metric::BoundaryFace;
use mmd_core::Point;

use super::{ExperimentReport, SolverStat};
use crate::config::{Closure, Experiment, ExperimentConfig};
use crate::norms::{error_norms, ErrorNorms, ErrorRow, ErrorTable};
use crate::output::Output;
use crate::problems::{
    meshless_config, meshless_setup, run_fv, sin_sin, sin_sin_grad, solver_config, Setup,
};
use crate::BenchError;

pub const VELOCITY: Point = Point::new(1.0, 2.0);

pub fn epsilon_for(peclet: f64) -> f64 {
    VELOCITY.norm() / peclet
}

fn mode_name(mode: AdvectiveMode) -> &'static str {
    match mode {
        AdvectiveMode::Centered => "centered",
        AdvectiveMode::Upwind => "upwind",
    }
}

pub fn run_advection(cfg: &ExperimentConfig, out: &Output) -> Result<ExperimentReport, BenchError> {
    let mut report = ExperimentReport::new(Experiment::Advection, true);
    let domain = Domain::unit_square();
    let mcfg = meshless_config(cfg, Default::default(), true);
    let setups = cfg
        .sizes
        .iter()
        .map(|&n| {
            meshless_setup(
                &domain,
                n,
                &BcSpec::uniform(BcTag::Dirichlet),
                cfg.perturbation,
                cfg.seed,
                &mcfg,
            )
        })
        .collect::<Result<Vec<Setup>, _>>()?;
    for mode in cfg.flux_modes() {
        for &pe in &cfg.peclet {
            let eps = epsilon_for(pe);
            let case = format!("{}_pe{pe}", mode_name(mode));
            let coeff = CoefficientField::constant(eps, VELOCITY);
            let source =
                move |p: Point| eps * 8.0 * PI * PI * sin_sin(p) + VELOCITY.dot(sin_sin_grad(p));
            let data = ProblemData {
                source: &source,
                dirichlet: &sin_sin,
                neumann: &|_, _| 0.0,
                outflow: &|_| false,
            };
            let mut table = ErrorTable::new(case.clone(), &ErrorNorms::COLUMNS);
            for (setup, &n) in setups.iter().zip(&cfg.sizes) {
                let op = &setup.op;
                let run = run_fv(
                    op,
                    &coeff,
                    mode,
                    cfg.mean.into(),
                    &data,
                    &solver_config(cfg),
                )?;
                let exact: Vec<f64> = op.points.iter().map(|&p| sin_sin(p)).collect();
                let exact_flux: Vec<Point> =
                    op.points.iter().map(|&p| sin_sin_grad(p) * eps).collect();
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
                    report.failures.push(format!("{case} N = {n}: n.c."));
                }
                table.push(ErrorRow {
                    n,
                    points: op.len(),
                    h: setup.cloud.fill_distance,
                    values: norms.values().into_iter().map(Some).collect(),
                    iterations: rep.iterations,
                    seconds: run.seconds,
                    converged: rep.converged,
                });
                report.stats.push(SolverStat {
                    case: case.clone(),
                    n,
                    points: op.len(),
                    solver: "bicgstab-ilu0",
                    iterations: rep.iterations as f64,
                    seconds: rep.seconds,
                    relative_residual: rep.relative_residual,
                    converged: rep.converged,
                });
                log::info!(
                    "{case} N = {n}: {}",
                    if rep.converged {
                        format!("l2_rel {:.4e}", norms.l2_relative)
                    } else {
                        "n.c.".into()
                    }
                );
                if cfg.dump_solutions && rep.converged {
                    out.solution(
                        &format!("solution_N{n}_{case}"),
                        &op.points,
                        &run.solution.u,
                        &run.flux,
                    )?;
                }
            }
            let line = match table.rate("l2_rel") {
                Some(fit) => format!(
                    "{case}: l2_rel rate {:.3} over {} sizes",
                    fit.rate, fit.rows_used
                ),
                None => format!("{case}: n.c. on too many sizes for a rate"),
            };
            report.summary.push(line);
            report.tables.push(table);
        }
    }
    Ok(report)
}

/// Skew-test boundary values: 1 on the left and top, a step at `x = 1/4` on
/// the bottom, 0 on the right.
pub fn skew_boundary_value(p: Point) -> f64 {
    const TOL: f64 = 1e-12;
    if p.x <= TOL || p.y >= 1.0 - TOL {
        1.0
    } else if p.y <= TOL {
        if p.x <= 0.25 {
            1.0
        } else {
            0.0
        }
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkewResult {
    pub peclet: f64,
    pub outflow: bool,
    pub min: f64,
    pub max: f64,
    pub converged: bool,
    pub solve: SolveReport,
    pub points: Vec<Point>,
    pub u: Vec<f64>,
}

/// Solves the skew test on an `n` lattice; `outflow` replaces the Dirichlet
/// data on the top and right sides by the outflow condition.
pub fn skew_advection(
    cfg: &ExperimentConfig,
    n: usize,
    peclet: f64,
    mode: AdvectiveMode,
    outflow: bool,
) -> Result<SkewResult, BenchError> {
    let domain = Domain::unit_square();
    let spec = if outflow {
        BcSpec::default()
            .with(BoundaryPart::Left, BcTag::Dirichlet)
            .with(BoundaryPart::Bottom, BcTag::Dirichlet)
            .with(BoundaryPart::Top, BcTag::Neumann)
            .with(BoundaryPart::Right, BcTag::Neumann)
    } else {
        BcSpec::uniform(BcTag::Dirichlet)
    };
    let setup = meshless_setup(
        &domain,
        n,
        &spec,
        cfg.perturbation,
        cfg.seed,
        &meshless_config(cfg, Default::default(), true),
    )?;
    let coeff = CoefficientField::constant(epsilon_for(peclet), VELOCITY);
    let is_outflow = |f: &BoundaryFace| f.tag == BcTag::Neumann;
    let data = ProblemData {
        source: &|_| 0.0,
        dirichlet: &skew_boundary_value,
        neumann: &|_, _| 0.0,
        outflow: &is_outflow,
    };
    let run = run_fv(
        &setup.op,
        &coeff,
        mode,
        cfg.mean.into(),
        &data,
        &solver_config(cfg),
    )?;
    let u = run.solution.u;
    Ok(SkewResult {
        peclet,
        outflow,
        min: u.iter().copied().fold(f64::INFINITY, f64::min),
        max: u.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        converged: run.solution.report.converged,
        solve: run.solution.report.clone(),
        points: setup.op.points.clone(),
        u,
    })
}

pub fn run_skew_advection(
    cfg: &ExperimentConfig,
    out: &Output,
) -> Result<ExperimentReport, BenchError> {
    let mut report = ExperimentReport::new(Experiment::SkewAdvection, true);
    let closures: &[bool] = match cfg.closure {
        Closure::Dirichlet => &[false],
        Closure::Outflow => &[true],
        Closure::Both => &[false, true],
    };
    for mode in cfg.flux_modes() {
        for &n in &cfg.sizes {
            for &pe in &cfg.peclet {
                for &outflow in closures {
                    let r = skew_advection(cfg, n, pe, mode, outflow)?;
                    let case = format!(
                        "{}_{}_pe{pe}",
                        mode_name(mode),
                        if outflow { "outflow" } else { "dirichlet" }
                    );
                    if !r.converged {
                        report.failures.push(format!("{case} N = {n}: n.c."));
                    }
                    report.summary.push(format!(
                        "{case} N = {n}: u in [{:.4}, {:.4}], {} iterations{}",
                        r.min,
                        r.max,
                        r.solve.iterations,
                        if r.converged { "" } else { " (n.c.)" }
                    ));
                    report.stats.push(SolverStat::from_report(
                        &case,
                        n,
                        r.points.len(),
                        "bicgstab-ilu0",
                        &r.solve,
                    ));
                    let zero = vec![Point::new(0.0, 0.0); r.points.len()];
                    out.solution(&format!("solution_N{n}_{case}"), &r.points, &r.u, &zero)?;
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skew_data_follow_the_sides() {
        assert_eq!(skew_boundary_value(Point::new(0.0, 0.5)), 1.0);
        assert_eq!(skew_boundary_value(Point::new(0.2, 0.0)), 1.0);
        assert_eq!(skew_boundary_value(Point::new(0.3, 0.0)), 0.0);
        assert_eq!(skew_boundary_value(Point::new(0.5, 1.0)), 1.0);
        assert_eq!(skew_boundary_value(Point::new(1.0, 0.5)), 0.0);
    }

    #[test]
    fn peclet_convention() {
        assert!((epsilon_for(1.0) - 5f64.sqrt()).abs() < 1e-15);
    }
}
