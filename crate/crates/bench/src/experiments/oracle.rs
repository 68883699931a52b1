//! Cartesian mesh-based divergence against the meshless one on unperturbed
//! unit-square lattices.

use mmd_core::cloud::unit_f64;
use mmd_core::geometry::{BcSpec, BcTag, Domain};
use mmd_core::mmd::{
    build_cartesian_oracle, sinusoidal_divergence, sinusoidal_field, MmdOperator, TruncationError,
};
use mmd_core::Point;
use rand_core::SeedableRng;
use rand_xoshiro::SplitMix64;

use super::ExperimentReport;
use crate::config::{Experiment, ExperimentConfig};
use crate::norms::{ErrorRow, ErrorTable};
use crate::output::Output;
use crate::problems::{meshless_config, meshless_setup};
use crate::BenchError;

pub const ORACLE_COLUMNS: [&str; 5] = ["trunc_rel", "trunc_sum", "trunc_mu", "trunc_max", "p1_max"];

#[derive(Clone, Debug, PartialEq)]
pub struct OracleComparison {
    pub n: usize,
    pub oracle: TruncationError,
    pub meshless: TruncationError,
    /// Largest interior error on random linear fields.
    pub oracle_p1: f64,
    pub meshless_p1: f64,
    pub oracle_points: usize,
    pub meshless_points: usize,
}

/// Largest `|DIV u − div u|` at interior points over `fields` random linear
/// fields `u(x) = b + A x` with entries in `[−1, 1]`.
pub fn linear_exactness(op: &MmdOperator, fields: usize, seed: u64) -> Result<f64, BenchError> {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..fields {
        let c: [f64; 6] = std::array::from_fn(|_| 2.0 * unit_f64(&mut rng) - 1.0);
        let u = move |p: Point| {
            Point::new(
                c[0] + c[1] * p.x + c[2] * p.y,
                c[3] + c[4] * p.x + c[5] * p.y,
            )
        };
        let field: Vec<Point> = op.points.iter().map(|&p| u(p)).collect();
        let div = op.div(&field, Some(&u))?;
        let exact = c[1] + c[5];
        for i in op.interior_indices() {
            worst = worst.max((div[i] - exact).abs());
        }
    }
    Ok(worst)
}

pub fn compare_with_oracle(
    cfg: &ExperimentConfig,
    n: usize,
) -> Result<OracleComparison, BenchError> {
    let oracle = build_cartesian_oracle(n, cfg.graph_factor, |_, _| BcTag::Neumann)?;
    let setup = meshless_setup(
        &Domain::unit_square(),
        n,
        &BcSpec::uniform(BcTag::Neumann),
        0.0,
        cfg.seed,
        &meshless_config(cfg, Default::default(), false),
    )?;
    let meshless = &setup.op;
    Ok(OracleComparison {
        n,
        oracle: oracle.truncation_error(&sinusoidal_field, &sinusoidal_divergence)?,
        meshless: meshless.truncation_error(&sinusoidal_field, &sinusoidal_divergence)?,
        oracle_p1: linear_exactness(&oracle, 10, cfg.seed)?,
        meshless_p1: linear_exactness(meshless, 10, cfg.seed)?,
        oracle_points: oracle.len(),
        meshless_points: meshless.len(),
    })
}

fn row(n: usize, points: usize, t: &TruncationError, p1: f64) -> ErrorRow {
    ErrorRow {
        n,
        points,
        h: 1.0 / n as f64,
        values: [t.relative, t.l2, t.l2_weighted, t.max, p1]
            .into_iter()
            .map(Some)
            .collect(),
        iterations: 0,
        seconds: 0.0,
        converged: true,
    }
}

pub fn run_oracle(cfg: &ExperimentConfig, _out: &Output) -> Result<ExperimentReport, BenchError> {
    let mut report = ExperimentReport::new(Experiment::Oracle, false);
    let mut oracle = ErrorTable::new("cartesian", &ORACLE_COLUMNS);
    let mut meshless = ErrorTable::new("meshless", &ORACLE_COLUMNS);
    for &n in &cfg.sizes {
        let c = compare_with_oracle(cfg, n)?;
        oracle.push(row(n, c.oracle_points, &c.oracle, c.oracle_p1));
        meshless.push(row(n, c.meshless_points, &c.meshless, c.meshless_p1));
        report.summary.push(format!(
            "N = {n}: relative truncation {:.4e} (cartesian) / {:.4e} (meshless); linear-field error {:.1e} / {:.1e}",
            c.oracle.relative, c.meshless.relative, c.oracle_p1, c.meshless_p1
        ));
    }
    for t in [&oracle, &meshless] {
        if let Some(fit) = t.rate("trunc_rel") {
            report.summary.push(format!(
                "{}: truncation rate {:.3} over {} sizes",
                t.case, fit.rate, fit.rows_used
            ));
        }
    }
    report.tables = vec![oracle, meshless];
    Ok(report)
}
