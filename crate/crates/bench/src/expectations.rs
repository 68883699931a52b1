//! Published reference values and acceptance tolerances, compiled in from
//! `expectations.json`.

use serde::Deserialize;

const RAW: &str = include_str!("../expectations.json");

#[derive(Clone, Debug, Deserialize)]
pub struct Expectations {
    pub convergence: ConvergenceRef,
    pub advection_centered: AdvectionRef,
    pub advection_upwind: AdvectionRef,
    pub truncation: TruncationRef,
    pub metric_solver: MetricSolverRef,
    pub darcy: DarcyRef,
}

#[derive(Clone, Debug, Deserialize)]
pub struct ConvergenceRates {
    pub l2_dirichlet: f64,
    pub h1_dirichlet: f64,
    pub l2_neumann: f64,
    pub h1_neumann: f64,
}

#[derive(Clone, Debug, Deserialize)]
pub struct ConvergenceRef {
    pub sizes: Vec<usize>,
    pub l2_dirichlet: Vec<f64>,
    pub h1_dirichlet: Vec<f64>,
    pub l2_neumann: Vec<f64>,
    pub h1_neumann: Vec<f64>,
    pub rates: ConvergenceRates,
    pub rate_band: [f64; 2],
    pub error_factor: f64,
}

#[derive(Clone, Debug, Deserialize)]
pub struct AdvectionRef {
    pub sizes: Vec<usize>,
    pub peclet: Vec<f64>,
    /// One row per Péclet number; `None` marks non-convergence.
    pub l2: Vec<Vec<Option<f64>>>,
    pub rates: Vec<Option<f64>>,
    #[serde(default)]
    pub rate_band: Option<[f64; 2]>,
}

impl AdvectionRef {
    pub fn row(&self, peclet: f64) -> Option<&[Option<f64>]> {
        self.peclet
            .iter()
            .position(|&p| p == peclet)
            .map(|k| self.l2[k].as_slice())
    }
}

#[derive(Clone, Debug, Deserialize)]
pub struct TruncationRates {
    pub uniform: f64,
    pub multiresolution: f64,
}

#[derive(Clone, Debug, Deserialize)]
pub struct TruncationRef {
    pub sizes: Vec<usize>,
    pub uniform: Vec<f64>,
    pub multiresolution: Vec<f64>,
    pub rates: TruncationRates,
    pub rate_band: [f64; 2],
    pub error_factor: f64,
}

#[derive(Clone, Debug, Deserialize)]
pub struct MetricSolverRef {
    pub sizes: Vec<usize>,
    pub seconds: Vec<f64>,
    pub iterations: Vec<f64>,
    pub max_iterations: usize,
    pub max_time_per_point_growth: f64,
    pub compatibility_tol: f64,
}

#[derive(Clone, Debug, Deserialize)]
pub struct DarcyRef {
    pub two_strip_ratios: Vec<f64>,
    pub five_strip_epsilon: Vec<f64>,
    pub five_spot_ratio: f64,
    pub relative_tol: f64,
    pub vertical_flux_fraction: f64,
}

/// Reference value at lattice size `n`, if tabulated.
pub fn at(sizes: &[usize], values: &[f64], n: usize) -> Option<f64> {
    sizes.iter().position(|&m| m == n).map(|k| values[k])
}

pub fn load() -> Expectations {
    serde_json::from_str(RAW).expect("expectations.json is valid")
}
