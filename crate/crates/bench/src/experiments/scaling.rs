//! Cost of the metric setup: volumes, boundary moments and the six
//! area-potential solves, on perturbed unit-square clouds.

use std::time::Instant;

use mmd_core::cloud::build_graph;
use mmd_core::geometry::{BcSpec, BcTag, Domain};
use mmd_core::gmls::{Frame, Kernel};
use mmd_core::linalg::AmgConfig;
use mmd_core::metric::{
    assemble_face_moments, boundary_face_moments, multiresolution_volumes, solve_area_potentials,
    uniform_volumes, VolumeScheme,
};
use serde::Serialize;

use super::{ExperimentReport, SolverStat};
use crate::config::{Experiment, ExperimentConfig};
use crate::output::Output;
use crate::problems::make_cloud;
use crate::BenchError;

/// Repeat short setups until this much time has accumulated.
const MIN_TIMED_SECONDS: f64 = 1.0;
const MAX_REPEATS: usize = 40;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub points: usize,
    pub mean_iterations: f64,
    pub max_iterations: usize,
    /// Mean wall time of one potential solve, AMG setup excluded.
    pub mean_solve_seconds: f64,
    /// Fastest full metric setup over the repeats.
    pub setup_seconds: f64,
    pub seconds_per_point: f64,
    /// Largest `|1ᵀb| / Σ|b|` over the six right-hand sides.
    pub max_compatibility: f64,
    pub max_residual: f64,
    pub all_converged: bool,
}

/// Metric-setup statistics for one lattice size.
pub fn metric_scaling(
    n: usize,
    seed: u64,
    perturbation: f64,
    graph_factor: f64,
    scheme: VolumeScheme,
) -> Result<ScalingRow, BenchError> {
    let domain = Domain::unit_square();
    let cloud = make_cloud(
        &domain,
        n,
        &BcSpec::uniform(BcTag::Neumann),
        perturbation,
        seed,
    )?;
    let radius = graph_factor * cloud.h_target;
    let graph = build_graph(&cloud.points, radius)?;
    let kernel = Kernel::new(radius);
    let frame = Frame::for_domain(&domain);
    let mut best = f64::INFINITY;
    let mut total = 0.0;
    let mut repeats = 0;
    let mut last = None;
    while repeats < MAX_REPEATS && (repeats == 0 || total < MIN_TIMED_SECONDS) {
        let start = Instant::now();
        let volumes = match scheme {
            VolumeScheme::Uniform => uniform_volumes(cloud.len(), domain.measure),
            VolumeScheme::Multiresolution => {
                multiresolution_volumes(&cloud.points, &kernel, domain.measure)
            }
        };
        let faces = boundary_face_moments(&cloud.segments, cloud.n_interior, &frame);
        let potentials = solve_area_potentials(
            &cloud.points,
            &graph,
            &volumes.mu,
            &faces,
            &frame,
            AmgConfig::default(),
        )?;
        let moments = assemble_face_moments(&potentials, &cloud.points, &graph, &frame);
        let dt = start.elapsed().as_secs_f64();
        assert_eq!(moments.len(), graph.edges.len());
        best = best.min(dt);
        total += dt;
        repeats += 1;
        last = Some(potentials);
    }
    let potentials = last.expect("at least one repeat");
    let reports = &potentials.reports;
    let max_compatibility = potentials
        .rhs
        .iter()
        .flatten()
        .map(|b| {
            let s: f64 = b.iter().sum();
            let a: f64 = b.iter().map(|v| v.abs()).sum();
            if a > 0.0 {
                s.abs() / a
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    Ok(ScalingRow {
        n,
        points: cloud.len(),
        mean_iterations: reports.iter().map(|r| r.iterations as f64).sum::<f64>()
            / reports.len() as f64,
        max_iterations: reports.iter().map(|r| r.iterations).max().unwrap_or(0),
        mean_solve_seconds: reports.iter().map(|r| r.seconds).sum::<f64>() / reports.len() as f64,
        setup_seconds: best,
        seconds_per_point: best / cloud.len() as f64,
        max_compatibility,
        max_residual: reports
            .iter()
            .map(|r| r.relative_residual)
            .fold(0.0, f64::max),
        all_converged: reports.iter().all(|r| r.converged),
    })
}

pub fn run_solver_scaling(
    cfg: &ExperimentConfig,
    out: &Output,
) -> Result<ExperimentReport, BenchError> {
    let mut report = ExperimentReport::new(Experiment::SolverScaling, false);
    let mut rows = Vec::new();
    for scheme in cfg.volumes.schemes() {
        for &n in &cfg.sizes {
            let row = metric_scaling(n, cfg.seed, cfg.perturbation, cfg.graph_factor, scheme)?;
            if !row.all_converged {
                report
                    .failures
                    .push(format!("N = {n}: a potential solve did not converge"));
            }
            report.summary.push(format!(
                "{} volumes, N = {n} ({} points): {:.2} mean / {} max PCG iterations, setup {:.4} s ({:.3e} s per point), compatibility {:.1e}",
                scheme.name(),
                row.points,
                row.mean_iterations,
                row.max_iterations,
                row.setup_seconds,
                row.seconds_per_point,
                row.max_compatibility
            ));
            report.stats.push(SolverStat {
                case: format!("metric-{}", scheme.name()),
                n,
                points: row.points,
                solver: "pcg-amg",
                iterations: row.mean_iterations,
                seconds: row.mean_solve_seconds,
                relative_residual: row.max_residual,
                converged: row.all_converged,
            });
            rows.push((scheme, row));
        }
    }
    out.write("metric_scaling.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record([
            "volumes",
            "N",
            "points",
            "mean_iterations",
            "max_iterations",
            "mean_solve_seconds",
            "setup_seconds",
            "seconds_per_point",
            "max_compatibility",
        ])?;
        for (s, r) in &rows {
            c.write_record([
                s.name().to_string(),
                r.n.to_string(),
                r.points.to_string(),
                format!("{:.3}", r.mean_iterations),
                r.max_iterations.to_string(),
                format!("{:.6e}", r.mean_solve_seconds),
                format!("{:.6e}", r.setup_seconds),
                format!("{:.6e}", r.seconds_per_point),
                format!("{:.3e}", r.max_compatibility),
            ])?;
        }
        c.flush()?;
        Ok(())
    })?;
    Ok(report)
}
