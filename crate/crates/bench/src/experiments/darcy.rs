//! Darcy benchmarks on the unit square with piecewise-constant diffusivity
//! and pure flux boundary conditions.

use std::sync::Arc;

use mmd_core::cloud::SpatialGrid;
use mmd_core::fvm::{AdvectiveMode, DiffusivityMean, ProblemData};
use mmd_core::geometry::{BcSpec, BcTag, CoefficientField, Domain, RegionPredicate};
use mmd_core::linalg::SolveReport;
use mmd_core::Point;

use super::{ExperimentReport, SolverStat};
use crate::config::{Experiment, ExperimentConfig};
use crate::output::Output;
use crate::problems::{meshless_config, meshless_setup, run_fv, solver_config, FvRun, Setup};
use crate::BenchError;

/// Strip diffusivities from bottom to top.
pub const FIVE_STRIP_EPSILON: [f64; 5] = [16.0, 6.0, 1.0, 10.0, 2.0];

fn piecewise(pieces: Vec<(RegionPredicate, f64)>) -> Result<CoefficientField, BenchError> {
    Ok(CoefficientField::new(
        pieces,
        Arc::new(|_| Point::new(0.0, 0.0)),
    )?)
}

fn neumann_setup(cfg: &ExperimentConfig, n: usize, perturbation: f64) -> Result<Setup, BenchError> {
    meshless_setup(
        &Domain::unit_square(),
        n,
        &BcSpec::uniform(BcTag::Neumann),
        perturbation,
        cfg.seed,
        &meshless_config(cfg, Default::default(), true),
    )
}

fn solve_darcy(
    cfg: &ExperimentConfig,
    setup: &Setup,
    coeff: &CoefficientField,
    mean: DiffusivityMean,
    neumann: &(dyn Fn(Point, Point) -> f64 + Sync),
) -> Result<FvRun, BenchError> {
    let data = ProblemData {
        source: &|_| 0.0,
        dirichlet: &|_| 0.0,
        neumann,
        outflow: &|_| false,
    };
    run_fv(
        &setup.op,
        coeff,
        AdvectiveMode::Upwind,
        mean,
        &data,
        &solver_config(cfg),
    )
}

/// Indices of points within `half_width` of a line, sorted by `key`.
fn band(
    points: &[Point],
    dist: impl Fn(Point) -> f64,
    half_width: f64,
    key: impl Fn(Point) -> f64,
) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len())
        .filter(|&i| dist(points[i]) <= half_width)
        .collect();
    idx.sort_by(|&a, &b| key(points[a]).total_cmp(&key(points[b])));
    idx
}

fn write_profile(
    out: &Output,
    name: &str,
    header: &[&str],
    rows: &[Vec<f64>],
) -> Result<(), BenchError> {
    out.write(name, |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(header)?;
        for r in rows {
            c.write_record(r.iter().map(|v| format!("{v:.10e}")))?;
        }
        c.flush()?;
        Ok(())
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoStripResult {
    pub ratio: f64,
    pub mean: DiffusivityMean,
    /// Mean reconstructed `∂_x u` right of the interface over the left mean.
    pub measured_ratio: f64,
    pub left_slope: f64,
    pub right_slope: f64,
    /// Largest `∂_x u` on the profile divided by the exact right slope.
    pub profile_peak: f64,
    pub converged: bool,
    pub solve: SolveReport,
    pub points: usize,
    /// `(x, y, ∂_x u, exact ∂_x u)` through `y = 1/2`, sorted by `x`.
    pub profile: Vec<[f64; 4]>,
}

/// Diffusivity 1 for `x ≤ 1/2` and `1/R` beyond, exact solution piecewise
/// linear in `x` with slopes 1 and `R`.
pub fn two_strip(
    cfg: &ExperimentConfig,
    n: usize,
    ratio: f64,
    mean: DiffusivityMean,
) -> Result<TwoStripResult, BenchError> {
    let (eps1, eps2) = (1.0, 1.0 / ratio);
    let coeff = piecewise(vec![
        (Arc::new(|p: Point| p.x <= 0.5), eps1),
        (Arc::new(|p: Point| p.x > 0.5), eps2),
    ])?;
    let setup = neumann_setup(cfg, n, cfg.perturbation)?;
    let neumann = move |_c: Point, nrm: Point| eps1 * nrm.x;
    let run = solve_darcy(cfg, &setup, &coeff, mean, &neumann)?;
    let op = &setup.op;
    let eps = &run.disc.config.epsilon;
    let dudx: Vec<f64> = run.flux.iter().zip(eps).map(|(s, e)| s.x / e).collect();
    let margin = op.kernel.radius;
    let mut left = (0.0, 0usize);
    let mut right = (0.0, 0usize);
    for (i, p) in op.points.iter().enumerate() {
        if p.y < margin || p.y > 1.0 - margin || (p.x - 0.5).abs() < margin {
            continue;
        }
        if p.x < 0.5 && p.x > margin {
            left = (left.0 + dudx[i], left.1 + 1);
        } else if p.x > 0.5 && p.x < 1.0 - margin {
            right = (right.0 + dudx[i], right.1 + 1);
        }
    }
    let left_slope = left.0 / left.1.max(1) as f64;
    let right_slope = right.0 / right.1.max(1) as f64;
    let half = 0.5 * setup.cloud.fill_distance;
    let profile: Vec<[f64; 4]> = band(&op.points, |p| (p.y - 0.5).abs(), half, |p| p.x)
        .into_iter()
        .map(|i| {
            let p = op.points[i];
            let exact = if p.x <= 0.5 { 1.0 } else { ratio };
            [p.x, p.y, dudx[i], exact]
        })
        .collect();
    let profile_peak = profile
        .iter()
        .map(|r| r[2])
        .fold(f64::NEG_INFINITY, f64::max)
        / ratio;
    Ok(TwoStripResult {
        ratio,
        mean,
        measured_ratio: right_slope / left_slope,
        left_slope,
        right_slope,
        profile_peak,
        converged: run.converged(),
        solve: run.solution.report.clone(),
        points: op.len(),
        profile,
    })
}

fn mean_name(m: DiffusivityMean) -> &'static str {
    match m {
        DiffusivityMean::Arithmetic => "arithmetic",
        DiffusivityMean::Harmonic => "harmonic",
    }
}

pub fn run_two_strip(cfg: &ExperimentConfig, out: &Output) -> Result<ExperimentReport, BenchError> {
    let mut report = ExperimentReport::new(Experiment::TwoStrip, false);
    for &n in &cfg.sizes {
        for &r in &cfg.ratios {
            let res = two_strip(cfg, n, r, cfg.mean.into())?;
            let case = format!("two_strip_R{r}_{}_N{n}", mean_name(res.mean));
            if !res.converged {
                report.failures.push(format!("{case}: no convergence"));
            }
            report.stats.push(SolverStat::from_report(
                &case, n, res.points, "bordered", &res.solve,
            ));
            report.summary.push(format!(
                "{case}: slope ratio {:.4} (target {r}), profile peak / R = {:.4}",
                res.measured_ratio, res.profile_peak
            ));
            let rows: Vec<Vec<f64>> = res.profile.iter().map(|r| r.to_vec()).collect();
            write_profile(
                out,
                &format!("profile_{case}.csv"),
                &["x", "y", "dudx", "dudx_exact"],
                &rows,
            )?;
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StripCheck {
    pub epsilon: f64,
    /// Mean `σ_x` near the strip center on `x = 1/2`.
    pub sigma_x: f64,
    /// Largest relative deviation `|σ_x + ε| / ε` near the center.
    pub worst_relative_error: f64,
    /// Largest `|σ_y|` near the center.
    pub max_sigma_y: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FiveStripResult {
    pub strips: Vec<StripCheck>,
    pub converged: bool,
    pub solve: SolveReport,
    /// `(y, u, σ_x, σ_y)` along `x = 1/2`, sorted by `y`.
    pub profile: Vec<[f64; 4]>,
    pub points: Vec<Point>,
    pub u: Vec<f64>,
    pub flux: Vec<Point>,
}

fn strip_index(y: f64) -> usize {
    ((y / 0.2).floor().max(0.0) as usize).min(4)
}

/// Five horizontal strips with `u = 1 − x`: the horizontal flux is `−ε` in
/// each strip and the vertical flux vanishes.
pub fn five_strip(
    cfg: &ExperimentConfig,
    n: usize,
    mean: DiffusivityMean,
) -> Result<FiveStripResult, BenchError> {
    let pieces: Vec<(RegionPredicate, f64)> = (0..5)
        .map(|k| {
            let pred: RegionPredicate = Arc::new(move |p: Point| strip_index(p.y) == k);
            (pred, FIVE_STRIP_EPSILON[k])
        })
        .collect();
    let coeff = piecewise(pieces)?;
    let setup = neumann_setup(cfg, n, cfg.perturbation)?;
    let neumann = |c: Point, nrm: Point| -FIVE_STRIP_EPSILON[strip_index(c.y)] * nrm.x;
    let run = solve_darcy(cfg, &setup, &coeff, mean, &neumann)?;
    let op = &setup.op;
    let h = 1.0 / n as f64;
    let strips = (0..5)
        .map(|k| {
            let center = Point::new(0.5, 0.1 + 0.2 * k as f64);
            let eps = FIVE_STRIP_EPSILON[k];
            let near: Vec<usize> = (0..op.len())
                .filter(|&i| op.points[i].dist(center) <= h * (1.0 + 1e-9))
                .collect();
            let sx: Vec<f64> = near.iter().map(|&i| run.flux[i].x).collect();
            StripCheck {
                epsilon: eps,
                sigma_x: sx.iter().sum::<f64>() / sx.len().max(1) as f64,
                worst_relative_error: sx.iter().map(|s| (s + eps).abs() / eps).fold(0.0, f64::max),
                max_sigma_y: near
                    .iter()
                    .map(|&i| run.flux[i].y.abs())
                    .fold(0.0, f64::max),
                samples: near.len(),
            }
        })
        .collect();
    let half = 0.5 * setup.cloud.fill_distance;
    let profile = band(&op.points, |p| (p.x - 0.5).abs(), half, |p| p.y)
        .into_iter()
        .map(|i| {
            [
                op.points[i].y,
                run.solution.u[i],
                run.flux[i].x,
                run.flux[i].y,
            ]
        })
        .collect();
    Ok(FiveStripResult {
        strips,
        converged: run.converged(),
        solve: run.solution.report.clone(),
        profile,
        points: op.points.clone(),
        u: run.solution.u.clone(),
        flux: run.flux.clone(),
    })
}

pub fn run_five_strip(
    cfg: &ExperimentConfig,
    out: &Output,
) -> Result<ExperimentReport, BenchError> {
    let mut report = ExperimentReport::new(Experiment::FiveStrip, false);
    for &n in &cfg.sizes {
        let res = five_strip(cfg, n, cfg.mean.into())?;
        if !res.converged {
            report
                .failures
                .push(format!("five strip N = {n}: no convergence"));
        }
        report.stats.push(SolverStat::from_report(
            "five_strip",
            n,
            res.u.len(),
            "bordered",
            &res.solve,
        ));
        for s in &res.strips {
            report.summary.push(format!(
                "N = {n}, ε = {}: σ_x {:.4} at the center (worst relative error {:.3}), max |σ_y| {:.3e}",
                s.epsilon, s.sigma_x, s.worst_relative_error, s.max_sigma_y
            ));
        }
        out.solution(
            &format!("solution_N{n}_five_strip"),
            &res.points,
            &res.u,
            &res.flux,
        )?;
        let rows: Vec<Vec<f64>> = res.profile.iter().map(|r| r.to_vec()).collect();
        write_profile(
            out,
            &format!("profile_five_strip_N{n}.csv"),
            &["y", "u", "sigma_x", "sigma_y"],
            &rows,
        )?;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FiveSpotResult {
    pub ratio: f64,
    pub converged: bool,
    pub finite: bool,
    pub min: f64,
    pub max: f64,
    pub solve: SolveReport,
    /// `(x, y, u, |σ|)` within half a fill distance of the diagonal, sorted by `x`.
    pub diagonal: Vec<[f64; 4]>,
    pub points: Vec<Point>,
    pub u: Vec<f64>,
    pub flux: Vec<Point>,
}

/// Quarter five-spot: diffusivity 1 in the lower-left and upper-right
/// quadrants and `1/R` elsewhere, total normal flux `1/8` through the two
/// faces at the origin and `−1/8` through those at `(1, 1)`.
pub fn five_spot(
    cfg: &ExperimentConfig,
    n: usize,
    ratio: f64,
    mean: DiffusivityMean,
    perturbation: f64,
) -> Result<FiveSpotResult, BenchError> {
    let same = |p: Point| (p.x < 0.5) == (p.y < 0.5);
    let coeff = piecewise(vec![
        (Arc::new(move |p: Point| same(p)), 1.0),
        (Arc::new(move |p: Point| !same(p)), 1.0 / ratio),
    ])?;
    let setup = neumann_setup(cfg, n, perturbation)?;
    let h = 1.0 / n as f64;
    let neumann = move |c: Point, _nrm: Point| {
        // each corner has two adjacent faces of length h
        if c.dist(Point::new(0.0, 0.0)) < h {
            1.0 / (16.0 * h)
        } else if c.dist(Point::new(1.0, 1.0)) < h {
            -1.0 / (16.0 * h)
        } else {
            0.0
        }
    };
    let run = solve_darcy(cfg, &setup, &coeff, mean, &neumann)?;
    let op = &setup.op;
    let u = run.solution.u.clone();
    let half = 0.5 * setup.cloud.fill_distance;
    let diagonal = band(
        &op.points,
        |p| (p.x - p.y).abs() / std::f64::consts::SQRT_2,
        half,
        |p| p.x + p.y,
    )
    .into_iter()
    .map(|i| {
        let p = op.points[i];
        [p.x, p.y, u[i], run.flux[i].norm()]
    })
    .collect();
    Ok(FiveSpotResult {
        ratio,
        converged: run.converged(),
        finite: u.iter().all(|v| v.is_finite()),
        min: u.iter().copied().fold(f64::INFINITY, f64::min),
        max: u.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        solve: run.solution.report.clone(),
        diagonal,
        points: op.points.clone(),
        u,
        flux: run.flux.clone(),
    })
}

/// Largest difference between a solution and the nearest sample of a
/// reference solution, away from the corner singularities, relative to the
/// reference range.
pub fn diagonal_discrepancy(coarse: &FiveSpotResult, reference: &FiveSpotResult) -> f64 {
    let grid = SpatialGrid::new(&reference.points, 0.05);
    let range = reference.max - reference.min;
    coarse
        .diagonal
        .iter()
        .filter(|r| {
            let p = Point::new(r[0], r[1]);
            p.dist(Point::new(0.0, 0.0)) > 0.1 && p.dist(Point::new(1.0, 1.0)) > 0.1
        })
        .filter_map(|r| {
            let (j, _) = grid.nearest(&reference.points, Point::new(r[0], r[1]), None)?;
            Some((r[2] - reference.u[j]).abs() / range)
        })
        .fold(0.0, f64::max)
}

pub fn run_five_spot(cfg: &ExperimentConfig, out: &Output) -> Result<ExperimentReport, BenchError> {
    let mut report = ExperimentReport::new(Experiment::FiveSpot, false);
    let mean = cfg.mean.into();
    for &n in &cfg.sizes {
        let mut unit = None;
        for &r in &cfg.ratios {
            let res = five_spot(cfg, n, r, mean, cfg.perturbation)?;
            let case = format!("five_spot_R{r}_N{n}");
            if !(res.converged && res.finite) {
                report
                    .failures
                    .push(format!("{case}: no finite converged solution"));
            }
            report.summary.push(format!(
                "{case}: u in [{:.4e}, {:.4e}], {} iterations",
                res.min, res.max, res.solve.iterations
            ));
            report.stats.push(SolverStat::from_report(
                &case,
                n,
                res.u.len(),
                "bordered",
                &res.solve,
            ));
            out.solution(
                &format!("solution_N{n}_{case}"),
                &res.points,
                &res.u,
                &res.flux,
            )?;
            let rows: Vec<Vec<f64>> = res.diagonal.iter().map(|r| r.to_vec()).collect();
            write_profile(
                out,
                &format!("profile_{case}.csv"),
                &["x", "y", "u", "flux_norm"],
                &rows,
            )?;
            if r == 1.0 {
                unit = Some(res);
            }
        }
        if let Some(unit) = unit {
            // homogeneous reference on a four times finer cloud
            let reference = five_spot(cfg, 4 * n, 1.0, mean, cfg.perturbation)?;
            let rows: Vec<Vec<f64>> = reference.diagonal.iter().map(|r| r.to_vec()).collect();
            write_profile(
                out,
                &format!("profile_five_spot_reference_N{}.csv", 4 * n),
                &["x", "y", "u", "flux_norm"],
                &rows,
            )?;
            report.summary.push(format!(
                "five_spot_R1_N{n}: largest diagonal deviation from the N = {} reference {:.3e} of its range",
                4 * n,
                diagonal_discrepancy(&unit, &reference)
            ));
        }
    }
    Ok(report)
}
