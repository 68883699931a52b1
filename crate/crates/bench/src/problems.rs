//! Clouds, operators, manufactured solutions and finite-volume runs shared by
//! the experiments.

use std::f64::consts::PI;
use std::time::Instant;

use mmd_core::cloud::{generate_cloud, PerturbationMode, PointCloud};
use mmd_core::fvm::{
    assemble_system, solve, AdvectiveMode, DiffusivityMean, FluxConfig, FvDiscretization,
    FvSolution, FvSystem, ProblemData, SolverConfig,
};
use mmd_core::geometry::{segment_boundary, tag_boundary, BcSpec, CoefficientField, Domain};
use mmd_core::metric::VolumeScheme;
use mmd_core::mmd::{build_meshless, MeshlessConfig, MmdOperator};
use mmd_core::Point;

use crate::config::ExperimentConfig;
use crate::BenchError;

/// `sin 2πx sin 2πy`.
pub fn sin_sin(p: Point) -> f64 {
    (2.0 * PI * p.x).sin() * (2.0 * PI * p.y).sin()
}

pub fn sin_sin_grad(p: Point) -> Point {
    let (sx, cx) = (2.0 * PI * p.x).sin_cos();
    let (sy, cy) = (2.0 * PI * p.y).sin_cos();
    Point::new(2.0 * PI * cx * sy, 2.0 * PI * sx * cy)
}

/// `−Δ(sin 2πx sin 2πy)`.
pub fn sin_sin_neg_laplacian(p: Point) -> f64 {
    8.0 * PI * PI * sin_sin(p)
}

pub struct Setup {
    pub cloud: PointCloud,
    pub op: MmdOperator,
    /// Wall time of the operator construction.
    pub seconds: f64,
}

impl Setup {
    /// Mean PCG iterations of the area-potential solves.
    pub fn metric_iterations(&self) -> f64 {
        let r = &self.op.metric_reports;
        if r.is_empty() {
            return 0.0;
        }
        r.iter().map(|s| s.iterations as f64).sum::<f64>() / r.len() as f64
    }
}

/// Meshless configuration implied by an experiment configuration.
pub fn meshless_config(
    cfg: &ExperimentConfig,
    volume_scheme: VolumeScheme,
    require_p2: bool,
) -> MeshlessConfig {
    MeshlessConfig {
        graph_factor: cfg.graph_factor,
        volume_scheme,
        require_p2,
        ..Default::default()
    }
}

/// Perturbed lattice cloud of spacing `1/n` with tagged boundary segments.
pub fn make_cloud(
    domain: &Domain,
    n: usize,
    spec: &BcSpec,
    perturbation: f64,
    seed: u64,
) -> Result<PointCloud, BenchError> {
    let h = 1.0 / n as f64;
    let mut segments = segment_boundary(domain, h)?;
    tag_boundary(&mut segments, spec)?;
    Ok(generate_cloud(
        domain,
        &segments,
        h,
        perturbation,
        PerturbationMode::Componentwise,
        seed,
    )?)
}

pub fn meshless_setup(
    domain: &Domain,
    n: usize,
    spec: &BcSpec,
    perturbation: f64,
    seed: u64,
    config: &MeshlessConfig,
) -> Result<Setup, BenchError> {
    let cloud = make_cloud(domain, n, spec, perturbation, seed)?;
    let start = Instant::now();
    let op = build_meshless(&cloud, domain, config)?;
    let seconds = start.elapsed().as_secs_f64();
    if op.radius_retries > 0 {
        log::info!(
            "N = {n}: graph radius grown {} times for unisolvency",
            op.radius_retries
        );
    }
    Ok(Setup { cloud, op, seconds })
}

pub struct FvRun {
    pub disc: FvDiscretization,
    pub system: FvSystem,
    pub solution: FvSolution,
    /// Reconstructed diffusive flux `ε_i ∇u(x_i)`.
    pub flux: Vec<Point>,
    pub seconds: f64,
}

impl FvRun {
    pub fn converged(&self) -> bool {
        self.solution.report.converged
    }
}

pub fn run_fv(
    op: &MmdOperator,
    coeff: &CoefficientField,
    mode: AdvectiveMode,
    mean: DiffusivityMean,
    data: &ProblemData<'_>,
    solver: &SolverConfig,
) -> Result<FvRun, BenchError> {
    let start = Instant::now();
    let disc = FvDiscretization::new(op, FluxConfig::sample(op, coeff, mode, mean)?)?;
    let system = assemble_system(op, &disc, data)?;
    let solution = solve(&system, solver)?;
    let flux = disc.nodal_diffusive_flux(op, &solution.u);
    Ok(FvRun {
        disc,
        system,
        solution,
        flux,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn solver_config(cfg: &ExperimentConfig) -> SolverConfig {
    SolverConfig {
        tol: cfg.solver_tol,
        max_iter: cfg.max_iter,
    }
}

/// `Σ μ_i v_i / Σ μ_i`.
pub fn weighted_mean(v: &[f64], mu: &[f64]) -> f64 {
    let s: f64 = v.iter().zip(mu).map(|(a, m)| a * m).sum();
    s / mu.iter().sum::<f64>()
}
