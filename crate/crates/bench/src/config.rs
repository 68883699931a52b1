//! Experiment configuration: per-experiment defaults, JSON overrides and
//! validation.

use std::path::Path;

use clap::ValueEnum;
use mmd_core::fvm::{AdvectiveMode, DiffusivityMean};
use mmd_core::metric::VolumeScheme;
use serde::{Deserialize, Serialize};

use crate::BenchError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// Manufactured-solution convergence on the perforated square.
    Convergence,
    /// Two vertical strips with a diffusivity jump at x = 1/2.
    TwoStrip,
    /// Five horizontal strips of different diffusivity.
    FiveStrip,
    /// Quarter five-spot with injection and production corners.
    FiveSpot,
    /// Advection-diffusion convergence tables over Péclet numbers.
    Advection,
    /// Skew advection with a discontinuous inflow profile.
    SkewAdvection,
    /// Truncation error of the divergence for both volume schemes.
    Truncation,
    /// Iterations and time of the area-potential solves.
    SolverScaling,
    /// Cartesian mesh-based instance against the meshless one on a lattice.
    Oracle,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Convergence => "convergence",
            Experiment::TwoStrip => "two-strip",
            Experiment::FiveStrip => "five-strip",
            Experiment::FiveSpot => "five-spot",
            Experiment::Advection => "advection",
            Experiment::SkewAdvection => "skew-advection",
            Experiment::Truncation => "truncation",
            Experiment::SolverScaling => "solver-scaling",
            Experiment::Oracle => "oracle",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Flux {
    Centered,
    Upwind,
}

impl From<Flux> for AdvectiveMode {
    fn from(f: Flux) -> Self {
        match f {
            Flux::Centered => AdvectiveMode::Centered,
            Flux::Upwind => AdvectiveMode::Upwind,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mean {
    Arithmetic,
    Harmonic,
}

impl From<Mean> for DiffusivityMean {
    fn from(m: Mean) -> Self {
        match m {
            Mean::Arithmetic => DiffusivityMean::Arithmetic,
            Mean::Harmonic => DiffusivityMean::Harmonic,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BcMode {
    Dirichlet,
    Neumann,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Volumes {
    Uniform,
    Multiresolution,
    Both,
}

impl Volumes {
    pub fn schemes(self) -> Vec<VolumeScheme> {
        match self {
            Volumes::Uniform => vec![VolumeScheme::Uniform],
            Volumes::Multiresolution => vec![VolumeScheme::Multiresolution],
            Volumes::Both => vec![VolumeScheme::Uniform, VolumeScheme::Multiresolution],
        }
    }
}

/// Skew-advection boundary closure on the top and right sides.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Closure {
    Dirichlet,
    Outflow,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Lattice sizes `N` (spacing `1/N`), strictly increasing.
    pub sizes: Vec<usize>,
    pub seed: u64,
    /// Advective flux; `None` runs both where that makes sense.
    pub flux: Option<Flux>,
    pub mean: Mean,
    pub bc: BcMode,
    pub volumes: Volumes,
    pub closure: Closure,
    pub peclet: Vec<f64>,
    /// Diffusivity ratios `R`.
    pub ratios: Vec<f64>,
    /// Interior jitter as a fraction of the spacing.
    pub perturbation: f64,
    /// Graph radius in units of the spacing.
    pub graph_factor: f64,
    pub solver_tol: f64,
    pub max_iter: usize,
    /// Also dump solutions as legacy VTK.
    pub vtk: bool,
    /// Dump per-point solution CSVs.
    pub dump_solutions: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::defaults_for(Experiment::Convergence)
    }
}

impl ExperimentConfig {
    pub fn defaults_for(experiment: Experiment) -> Self {
        let base = Self {
            experiment,
            sizes: vec![16, 32, 64, 128],
            seed: 0,
            flux: None,
            mean: Mean::Harmonic,
            bc: BcMode::Both,
            volumes: Volumes::Both,
            closure: Closure::Both,
            peclet: Vec::new(),
            ratios: Vec::new(),
            perturbation: 0.2,
            graph_factor: 2.5,
            solver_tol: 1e-8,
            max_iter: 2000,
            vtk: false,
            dump_solutions: true,
        };
        match experiment {
            Experiment::Convergence | Experiment::Truncation => base,
            Experiment::TwoStrip => Self {
                sizes: vec![64],
                ratios: vec![4.0, 64.0],
                ..base
            },
            Experiment::FiveStrip => Self {
                sizes: vec![96],
                perturbation: 0.0,
                ..base
            },
            Experiment::FiveSpot => Self {
                sizes: vec![32],
                ratios: vec![1.0, 10.0, 1000.0],
                ..base
            },
            Experiment::Advection => Self {
                peclet: vec![1.0, 10.0, 100.0, 1000.0, 10000.0],
                ..base
            },
            Experiment::SkewAdvection => Self {
                sizes: vec![64],
                flux: Some(Flux::Upwind),
                peclet: vec![1.0, 10.0, 100.0, 1000.0],
                ..base
            },
            Experiment::SolverScaling => Self {
                sizes: vec![16, 32, 64, 128, 256, 512],
                volumes: Volumes::Multiresolution,
                dump_solutions: false,
                ..base
            },
            Experiment::Oracle => Self {
                sizes: vec![16, 32, 64],
                perturbation: 0.0,
                dump_solutions: false,
                ..base
            },
        }
    }

    /// Defaults for `experiment`, overridden by the keys present in `json`.
    /// An `experiment` key in the file must agree with the requested one.
    pub fn from_json(experiment: Experiment, json: &str) -> Result<Self, BenchError> {
        let mut value = serde_json::to_value(Self::defaults_for(experiment))
            .map_err(|e| BenchError::Config(e.to_string()))?;
        let overrides: serde_json::Value =
            serde_json::from_str(json).map_err(|e| BenchError::Config(e.to_string()))?;
        let serde_json::Value::Object(map) = overrides else {
            return Err(BenchError::Config(
                "configuration must be a JSON object".into(),
            ));
        };
        let target = value
            .as_object_mut()
            .expect("config serializes to an object");
        for (k, v) in map {
            target.insert(k, v);
        }
        let config: Self =
            serde_json::from_value(value).map_err(|e| BenchError::Config(e.to_string()))?;
        if config.experiment != experiment {
            return Err(BenchError::Config(format!(
                "configuration file is for '{}', not '{}'",
                config.experiment.name(),
                experiment.name()
            )));
        }
        Ok(config)
    }

    pub fn from_file(experiment: Experiment, path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(experiment, &text)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let fail = |msg: String| Err(BenchError::Config(msg));
        if self.sizes.is_empty() {
            return fail("at least one lattice size is required".into());
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return fail(format!(
                "lattice sizes must be strictly increasing: {:?}",
                self.sizes
            ));
        }
        if let Some(&n) = self.sizes.iter().find(|&&n| n < 8) {
            return fail(format!("lattice size {n} is below the minimum of 8"));
        }
        if self.experiment == Experiment::Convergence || self.experiment == Experiment::Truncation {
            // holes of side 0.2 must be resolved by the boundary segmentation
            if let Some(&n) = self.sizes.iter().find(|&&n| n < 10) {
                return fail(format!("the perforated square needs N >= 10, got {n}"));
            }
        }
        if !(0.0..0.5).contains(&self.perturbation) {
            return fail(format!(
                "perturbation must lie in [0, 0.5), got {}",
                self.perturbation
            ));
        }
        if !(self.graph_factor >= 1.5) {
            return fail(format!(
                "graph factor must be at least 1.5, got {}",
                self.graph_factor
            ));
        }
        if !(self.solver_tol > 0.0) || self.max_iter == 0 {
            return fail("solver tolerance and iteration limit must be positive".into());
        }
        if let Some(pe) = self.peclet.iter().find(|p| !(**p > 0.0)) {
            return fail(format!("Péclet numbers must be positive, got {pe}"));
        }
        if let Some(r) = self.ratios.iter().find(|r| !(**r > 0.0)) {
            return fail(format!("diffusivity ratios must be positive, got {r}"));
        }
        let needs_pe = matches!(
            self.experiment,
            Experiment::Advection | Experiment::SkewAdvection
        );
        if needs_pe && self.peclet.is_empty() {
            return fail("this experiment needs a Péclet list".into());
        }
        let needs_ratio = matches!(self.experiment, Experiment::TwoStrip | Experiment::FiveSpot);
        if needs_ratio && self.ratios.is_empty() {
            return fail("this experiment needs a diffusivity-ratio list".into());
        }
        Ok(())
    }

    /// Advective modes to run: the configured one, or both.
    pub fn flux_modes(&self) -> Vec<AdvectiveMode> {
        match self.flux {
            Some(f) => vec![f.into()],
            None => vec![AdvectiveMode::Centered, AdvectiveMode::Upwind],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_overrides_defaults() {
        let c = ExperimentConfig::from_json(
            Experiment::Advection,
            r#"{"sizes": [8, 16], "flux": "upwind", "peclet": [5.0]}"#,
        )
        .unwrap();
        assert_eq!(c.sizes, vec![8, 16]);
        assert_eq!(c.flux, Some(Flux::Upwind));
        assert_eq!(c.peclet, vec![5.0]);
        assert_eq!(c.seed, 0);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            r#"{"sizes": [32, 16]}"#,
            r#"{"sizes": []}"#,
            r#"{"perturbation": 0.7}"#,
            r#"{"flux": "sideways"}"#,
            r#"{"unknown_key": 1}"#,
            r#"{"experiment": "truncation"}"#,
            r#"[1, 2]"#,
        ];
        for json in bad {
            let r = ExperimentConfig::from_json(Experiment::Convergence, json)
                .and_then(|c| c.validate().map(|_| c));
            assert!(matches!(r, Err(BenchError::Config(_))), "{json} accepted");
        }
    }

    #[test]
    fn defaults_validate() {
        for e in Experiment::value_variants() {
            ExperimentConfig::defaults_for(*e).validate().unwrap();
        }
    }
}
