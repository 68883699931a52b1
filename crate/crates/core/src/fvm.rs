//! Virtual finite-volume scheme for `−∇·σ(u) = f` with `σ(u) = ε∇u − a u`:
//! rows `−μ_i (DIV σ̃(u))_i = μ_i f_i` at every point not on the Dirichlet
//! boundary.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{MmdError, Result};
use crate::geometry::{BcTag, CoefficientField, Point};
use crate::gmls::{upwind_p1_stencils, Stencil, VecP1, P1_DIM, VP1_DIM};
use crate::linalg::{
    bicgstab, bordered_solve_nonsymmetric, CsrMatrix, Ilu0, KrylovOptions, SolveReport,
    TripletBuilder,
};
use crate::metric::BoundaryFace;
use crate::mmd::{FieldTransfer, MmdOperator};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AdvectiveMode {
    Centered,
    #[default]
    Upwind,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DiffusivityMean {
    Arithmetic,
    #[default]
    Harmonic,
}

impl DiffusivityMean {
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            DiffusivityMean::Arithmetic => 0.5 * (a + b),
            DiffusivityMean::Harmonic => 2.0 * a * b / (a + b),
        }
    }
}

/// Coefficient samples and flux options.
#[derive(Clone, Debug)]
pub struct FluxConfig {
    pub advective_mode: AdvectiveMode,
    pub diffusivity_mean: DiffusivityMean,
    /// `ε_i` per point.
    pub epsilon: Vec<f64>,
    /// `a_i` per point.
    pub velocity: Vec<Point>,
    /// `a(x_ij)` per edge.
    pub edge_velocity: Vec<Point>,
    /// `a` at each boundary-face centroid.
    pub face_velocity: Vec<Point>,
}

impl FluxConfig {
    pub fn sample(
        op: &MmdOperator,
        coeff: &CoefficientField,
        advective_mode: AdvectiveMode,
        diffusivity_mean: DiffusivityMean,
    ) -> Result<Self> {
        let epsilon = op
            .points
            .iter()
            .map(|&p| coeff.diffusivity(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            advective_mode,
            diffusivity_mean,
            epsilon,
            velocity: op.points.iter().map(|&p| coeff.velocity_at(p)).collect(),
            edge_velocity: op
                .face_centroids
                .iter()
                .map(|&p| coeff.velocity_at(p))
                .collect(),
            face_velocity: op
                .boundary_faces
                .iter()
                .map(|f| coeff.velocity_at(f.centroid))
                .collect(),
        })
    }

    pub fn has_advection(&self) -> bool {
        self.velocity
            .iter()
            .chain(&self.edge_velocity)
            .any(|a| a.x != 0.0 || a.y != 0.0)
    }
}

/// Boundary treatment of one boundary face.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaceCondition {
    /// `u = g` at the owning point, which is eliminated.
    Dirichlet,
    /// `n·σ = h` given as data.
    Neumann,
    /// `n·σ = −(a·n) u_i`: the diffusive normal flux is dropped.
    Outflow,
}

/// Problem data: source, Dirichlet values, Neumann normal flux `n·σ` and the
/// faces that carry the outflow condition.
pub struct ProblemData<'a> {
    pub source: &'a (dyn Fn(Point) -> f64 + Sync),
    pub dirichlet: &'a (dyn Fn(Point) -> f64 + Sync),
    /// `(centroid, outward normal) ↦ n·σ`.
    pub neumann: &'a (dyn Fn(Point, Point) -> f64 + Sync),
    pub outflow: &'a (dyn Fn(&BoundaryFace) -> bool + Sync),
}

/// Per-edge linear maps `u ↦ σ̃_ij(u)·μ_ij`.
#[derive(Clone, Debug)]
pub struct FvDiscretization {
    pub config: FluxConfig,
    /// `ε_ij` per edge.
    pub edge_epsilon: Vec<f64>,
    /// Upwind stencils and blend weights, when the advective mode asks for them.
    pub upwind: Option<(Vec<Stencil>, Vec<f64>)>,
    pub upwind_fallbacks: Vec<usize>,
    advective: bool,
}

impl FvDiscretization {
    pub fn new(op: &MmdOperator, config: FluxConfig) -> Result<Self> {
        if op.p2_gradient.is_none() {
            return Err(MmdError::Config(
                "the diffusive flux needs P2 gradient stencils".into(),
            ));
        }
        if !matches!(op.transfer, FieldTransfer::Nodal { .. }) {
            return Err(MmdError::Config(
                "the finite-volume scheme needs nodal field transfer".into(),
            ));
        }
        let n = op.len();
        if config.epsilon.len() != n || config.velocity.len() != n {
            return Err(MmdError::Config(
                "coefficient samples do not match the cloud".into(),
            ));
        }
        if let Some(e) = config.epsilon.iter().find(|e| !(**e > 0.0)) {
            return Err(MmdError::Config(format!(
                "diffusivity must be positive, got {e}"
            )));
        }
        let edge_epsilon = op
            .graph
            .edges
            .iter()
            .map(|&(i, j)| {
                config
                    .diffusivity_mean
                    .apply(config.epsilon[i], config.epsilon[j])
            })
            .collect();
        let (upwind, upwind_fallbacks) =
            if config.advective_mode == AdvectiveMode::Upwind && config.has_advection() {
                let (stencils, fallbacks) = upwind_p1_stencils(
                    &op.points,
                    &op.graph,
                    &op.kernel,
                    &op.frame,
                    &config.velocity,
                )?;
                // θ_ij = 1 when a(x_ij)·(x_j − x_i) ≥ 0
                let theta = op
                    .graph
                    .edges
                    .iter()
                    .zip(&config.edge_velocity)
                    .map(|(&(i, j), a)| {
                        if a.dot(op.points[j] - op.points[i]) >= 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect();
                (Some((stencils, theta)), fallbacks)
            } else {
                (None, Vec::new())
            };
        let advective = config.has_advection();
        Ok(Self {
            config,
            edge_epsilon,
            upwind,
            upwind_fallbacks,
            advective,
        })
    }

    /// Derived nodal coefficients `g_i` of `∇u` (unscaled by `ε`).
    pub fn nodal_gradient_coefficients(&self, op: &MmdOperator, u: &[f64]) -> Vec<VecP1> {
        let p2 = op
            .p2_gradient
            .as_ref()
            .expect("checked in FvDiscretization::new");
        p2.par_iter()
            .map(|s| {
                let v = s.apply(u);
                std::array::from_fn(|k| v[k])
            })
            .collect()
    }

    /// `σ̃_d,ij = (ε_ij/2)(g_i + g_j)`.
    pub fn diffusive_flux_moments(&self, op: &MmdOperator, u: &[f64]) -> Vec<VecP1> {
        let g = self.nodal_gradient_coefficients(op, u);
        op.graph
            .edges
            .par_iter()
            .zip(&self.edge_epsilon)
            .map(|(&(i, j), &eps)| std::array::from_fn(|s| 0.5 * eps * (g[i][s] + g[j][s])))
            .collect()
    }

    /// Centered or upwind moments of the advective flux `−a u`.
    pub fn advective_flux_moments(&self, op: &MmdOperator, u: &[f64]) -> Vec<VecP1> {
        let sample: Vec<Point> = self
            .config
            .velocity
            .iter()
            .zip(u)
            .map(|(a, &u)| *a * (-u))
            .collect();
        let (stencils, theta): (&[Stencil], Option<&[f64]>) = match (&self.upwind, &op.transfer) {
            (Some((st, th)), _) => (st, Some(th)),
            (None, FieldTransfer::Nodal { stencils, .. }) => (stencils, None),
            (None, FieldTransfer::Face { .. }) => unreachable!("checked in FvDiscretization::new"),
        };
        let c: Vec<VecP1> = stencils
            .par_iter()
            .map(|s| s.apply_vector(&sample))
            .collect();
        op.graph
            .edges
            .par_iter()
            .enumerate()
            .map(|(e, &(i, j))| {
                let t = theta.map_or(0.5, |th| th[e]);
                std::array::from_fn(|s| t * c[i][s] + (1.0 - t) * c[j][s])
            })
            .collect()
    }

    pub fn flux_moments(&self, op: &MmdOperator, u: &[f64]) -> Vec<VecP1> {
        let mut m = self.diffusive_flux_moments(op, u);
        if self.advective {
            for (d, a) in m.iter_mut().zip(self.advective_flux_moments(op, u)) {
                for s in 0..VP1_DIM {
                    d[s] += a[s];
                }
            }
        }
        m
    }

    /// Reconstructed diffusive flux `ε_i ∇u(x_i)` at the points.
    pub fn nodal_diffusive_flux(&self, op: &MmdOperator, u: &[f64]) -> Vec<Point> {
        self.nodal_gradient_coefficients(op, u)
            .iter()
            .zip(&op.points)
            .zip(&self.config.epsilon)
            .map(|((g, &p), &eps)| op.frame.eval_vector(g, p) * eps)
            .collect()
    }

    /// Weights `(k, w)` with `σ̃_e(u)·μ_e = Σ w u_k`.
    fn edge_weights(&self, op: &MmdOperator, e: usize) -> Vec<(usize, f64)> {
        let (i, j) = op.graph.edges[e];
        let mu = &op.face_moments[e];
        let mut out = Vec::new();
        let p2 = op
            .p2_gradient
            .as_ref()
            .expect("checked in FvDiscretization::new");
        let half_eps = 0.5 * self.edge_epsilon[e];
        for s in [&p2[i], &p2[j]] {
            for (k, &nb) in s.neighbors.iter().enumerate() {
                let w: f64 = (0..VP1_DIM).map(|r| mu[r] * s.rows[r][k]).sum();
                out.push((nb, half_eps * w));
            }
        }
        if self.advective {
            let (stencils, t): (&[Stencil], f64) = match (&self.upwind, &op.transfer) {
                (Some((st, th)), _) => (st, th[e]),
                (None, FieldTransfer::Nodal { stencils, .. }) => (stencils, 0.5),
                (None, FieldTransfer::Face { .. }) => {
                    unreachable!("checked in FvDiscretization::new")
                }
            };
            for (s, blend) in [(&stencils[i], t), (&stencils[j], 1.0 - t)] {
                if blend == 0.0 {
                    continue;
                }
                for (k, &nb) in s.neighbors.iter().enumerate() {
                    let a = self.config.velocity[nb];
                    let w: f64 = (0..P1_DIM)
                        .map(|r| s.rows[r][k] * (a.x * mu[r] + a.y * mu[P1_DIM + r]))
                        .sum();
                    out.push((nb, -blend * w));
                }
            }
        }
        out
    }
}

/// Assembled linear system.
#[derive(Clone, Debug)]
pub struct FvSystem {
    /// `u ↦ −μ_i (DIV σ̃(u))_i` over all points, with outflow terms and
    /// without data.
    pub full: CsrMatrix,
    /// Rows and columns restricted to the unknowns.
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Global index of each unknown.
    pub unknowns: Vec<usize>,
    /// `(point, value)` for eliminated Dirichlet points.
    pub dirichlet: Vec<(usize, f64)>,
    pub face_conditions: Vec<FaceCondition>,
    /// Zero-mean weights `μ` for pure-Neumann diffusion, else `None`.
    pub constraint: Option<Vec<f64>>,
}

pub fn face_conditions(
    op: &MmdOperator,
    outflow: &(dyn Fn(&BoundaryFace) -> bool + Sync),
) -> Vec<FaceCondition> {
    op.boundary_faces
        .iter()
        .map(|f| match f.tag {
            BcTag::Dirichlet => FaceCondition::Dirichlet,
            BcTag::Neumann if outflow(f) => FaceCondition::Outflow,
            BcTag::Neumann => FaceCondition::Neumann,
        })
        .collect()
}

pub fn assemble_system(
    op: &MmdOperator,
    disc: &FvDiscretization,
    data: &ProblemData<'_>,
) -> Result<FvSystem> {
    let n = op.len();
    let conditions = face_conditions(op, data.outflow);
    let weights: Vec<Vec<(usize, f64)>> = (0..op.graph.edges.len())
        .into_par_iter()
        .map(|e| disc.edge_weights(op, e))
        .collect();
    let mut tb = TripletBuilder::new(n, n);
    for (e, w) in weights.iter().enumerate() {
        let (i, j) = op.graph.edges[e];
        for &(k, v) in w {
            tb.add(i, k, -v);
            tb.add(j, k, v);
        }
    }
    let mut rhs_full: Vec<f64> = op
        .points
        .iter()
        .zip(&op.volumes.mu)
        .map(|(&p, m)| m * (data.source)(p))
        .collect();
    let mut is_dirichlet = vec![false; n];
    for ((f, cond), a) in op
        .boundary_faces
        .iter()
        .zip(&conditions)
        .zip(&disc.config.face_velocity)
    {
        match cond {
            FaceCondition::Dirichlet => is_dirichlet[f.owner] = true,
            FaceCondition::Neumann => {
                rhs_full[f.owner] += (data.neumann)(f.centroid, f.normal) * f.measure
            }
            FaceCondition::Outflow => tb.add(f.owner, f.owner, a.dot(f.normal) * f.measure),
        }
    }
    let full = tb.build();
    let dirichlet: Vec<(usize, f64)> = (0..n)
        .filter(|&i| is_dirichlet[i])
        .map(|i| (i, (data.dirichlet)(op.points[i])))
        .collect();
    let unknowns: Vec<usize> = (0..n).filter(|&i| !is_dirichlet[i]).collect();
    let mut local = vec![usize::MAX; n];
    for (k, &i) in unknowns.iter().enumerate() {
        local[i] = k;
    }
    let mut values = vec![0.0; n];
    for &(i, g) in &dirichlet {
        values[i] = g;
    }
    let mut reduced = TripletBuilder::new(unknowns.len(), unknowns.len());
    let mut rhs = Vec::with_capacity(unknowns.len());
    for (k, &i) in unknowns.iter().enumerate() {
        let (cols, vals) = full.row(i);
        let mut b = rhs_full[i];
        for (&c, &v) in cols.iter().zip(vals) {
            if is_dirichlet[c] {
                b -= v * values[c];
            } else {
                reduced.add(k, local[c], v);
            }
        }
        rhs.push(b);
    }
    let pure_neumann =
        dirichlet.is_empty() && !conditions.contains(&FaceCondition::Outflow) && !disc.advective;
    let constraint = pure_neumann.then(|| op.volumes.mu.clone());
    if pure_neumann {
        let sum: f64 = rhs.iter().sum();
        let scale: f64 = rhs.iter().map(|v| v.abs()).sum();
        if sum.abs() > 1e-8 * scale {
            log::warn!(
                "pure Neumann data are discretely incompatible (relative sum {:.3e}); the multiplier absorbs it",
                sum.abs() / scale
            );
        }
    }
    Ok(FvSystem {
        full,
        matrix: reduced.build(),
        rhs,
        unknowns,
        dirichlet,
        face_conditions: conditions,
        constraint,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 2000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FvSolution {
    /// Values at every point, Dirichlet points included.
    pub u: Vec<f64>,
    pub report: SolveReport,
    /// Lagrange multiplier of the zero-mean constraint.
    pub multiplier: Option<f64>,
}

/// BiCGStab with ILU(0) preconditioning, or the bordered solve for pure
/// Neumann diffusion. Non-convergence is reported, not raised.
pub fn solve(system: &FvSystem, config: &SolverConfig) -> Result<FvSolution> {
    let opts = KrylovOptions::new(config.tol, config.max_iter);
    let (x, report, multiplier) = match &system.constraint {
        Some(w) => {
            let w: Vec<f64> = system.unknowns.iter().map(|&i| w[i]).collect();
            let (x, lambda, rep) =
                bordered_solve_nonsymmetric(&system.matrix, &system.rhs, &w, &opts)?;
            (x, rep, Some(lambda))
        }
        None => {
            let (x, rep) = bicgstab(
                &system.matrix,
                &system.rhs,
                &opts,
                &Ilu0::new(&system.matrix),
            );
            (x, rep, None)
        }
    };
    let mut u = vec![0.0; system.full.n_rows];
    for (&i, v) in system.unknowns.iter().zip(&x) {
        u[i] = *v;
    }
    for &(i, g) in &system.dirichlet {
        u[i] = g;
    }
    if !report.converged {
        log::warn!(
            "finite-volume solve did not converge: {} iterations, relative residual {:.3e}",
            report.iterations,
            report.relative_residual
        );
    }
    Ok(FvSolution {
        u,
        report,
        multiplier,
    })
}

/// `−μ_i (DIV σ̃(u))_i` from the flux moments, with homogeneous Neumann
/// data and the outflow terms: the matrix-free counterpart of `system.full`.
pub fn apply_matrix_free(
    op: &MmdOperator,
    disc: &FvDiscretization,
    conditions: &[FaceCondition],
    u: &[f64],
) -> Result<Vec<f64>> {
    let moments = disc.flux_moments(op, u);
    let boundary: Vec<f64> = op
        .boundary_faces
        .iter()
        .zip(conditions)
        .zip(&disc.config.face_velocity)
        .map(|((f, c), a)| match c {
            FaceCondition::Outflow => -a.dot(f.normal) * u[f.owner] * f.measure,
            _ => 0.0,
        })
        .collect();
    let div = op.apply_div(&moments, &boundary)?;
    Ok(div
        .iter()
        .zip(&op.volumes.mu)
        .map(|(d, m)| -d * m)
        .collect())
}

/// `|Σ_k (A x + w λ − b)_k| / Σ|b|` over the unknowns: the discrete
/// conservation defect of a computed solution.
pub fn conservation_defect(system: &FvSystem, solution: &FvSolution) -> f64 {
    let x: Vec<f64> = system.unknowns.iter().map(|&i| solution.u[i]).collect();
    let ax = system.matrix.mul_vec(&x);
    let mut sum = 0.0;
    for (k, &i) in system.unknowns.iter().enumerate() {
        let lambda_term = match (&system.constraint, solution.multiplier) {
            (Some(w), Some(l)) => w[i] * l,
            _ => 0.0,
        };
        sum += ax[k] + lambda_term - system.rhs[k];
    }
    let scale: f64 = system.rhs.iter().map(|b| b.abs()).sum();
    if scale > 0.0 {
        sum.abs() / scale
    } else {
        sum.abs()
    }
}

/// Point CSV with columns `id,x,y,u,sigma_x,sigma_y`.
pub fn write_solution_csv<W: Write>(
    mut out: W,
    points: &[Point],
    u: &[f64],
    flux: &[Point],
) -> Result<()> {
    writeln!(out, "id,x,y,u,sigma_x,sigma_y")?;
    for (i, ((p, v), s)) in points.iter().zip(u).zip(flux).enumerate() {
        writeln!(
            out,
            "{i},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            p.x, p.y, v, s.x, s.y
        )?;
    }
    Ok(())
}

/// Legacy-VTK unstructured point file with `u` and the flux as point data.
pub fn write_solution_vtk<W: Write>(
    mut out: W,
    points: &[Point],
    u: &[f64],
    flux: &[Point],
) -> Result<()> {
    let n = points.len();
    writeln!(out, "# vtk DataFile Version 3.0\nvirtual finite-volume solution\nASCII\nDATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {n} double")?;
    for p in points {
        writeln!(out, "{:.17e} {:.17e} 0", p.x, p.y)?;
    }
    writeln!(out, "CELLS {n} {}", 2 * n)?;
    for i in 0..n {
        writeln!(out, "1 {i}")?;
    }
    writeln!(out, "CELL_TYPES {n}")?;
    for _ in 0..n {
        writeln!(out, "1")?;
    }
    writeln!(
        out,
        "POINT_DATA {n}\nSCALARS u double 1\nLOOKUP_TABLE default"
    )?;
    for v in u {
        writeln!(out, "{v:.17e}")?;
    }
    writeln!(out, "VECTORS sigma double")?;
    for s in flux {
        writeln!(out, "{:.17e} {:.17e} 0", s.x, s.y)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{generate_cloud, unit_f64, PerturbationMode};
    use crate::geometry::{segment_boundary, tag_boundary, BcSpec, Domain};
    use crate::mmd::{build_meshless, MeshlessConfig};
    use rand_core::SeedableRng;
    use rand_xoshiro::SplitMix64;

    fn operator(domain: &Domain, n: usize, tag: BcTag, seed: u64) -> MmdOperator {
        let h = 1.0 / n as f64;
        let mut segs = segment_boundary(domain, h).unwrap();
        tag_boundary(&mut segs, &BcSpec::uniform(tag)).unwrap();
        let cloud =
            generate_cloud(domain, &segs, h, 0.2, PerturbationMode::Componentwise, seed).unwrap();
        build_meshless(
            &cloud,
            domain,
            &MeshlessConfig {
                require_p2: true,
                ..Default::default()
            },
        )
        .unwrap()
    }

    fn random_field(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = SplitMix64::seed_from_u64(seed);
        (0..n).map(|_| unit_f64(&mut rng) - 0.5).collect()
    }

    fn no_outflow(_: &BoundaryFace) -> bool {
        false
    }

    #[test]
    fn diffusivity_means() {
        assert_eq!(DiffusivityMean::Arithmetic.apply(1.0, 3.0), 2.0);
        assert_eq!(DiffusivityMean::Harmonic.apply(1.0, 3.0), 1.5);
        for m in [DiffusivityMean::Arithmetic, DiffusivityMean::Harmonic] {
            assert_eq!(m.apply(2.5, 2.5), 2.5);
        }
    }

    #[test]
    fn constant_dirichlet_data_give_constant_solution() {
        let op = operator(&Domain::unit_square(), 12, BcTag::Dirichlet, 1);
        let cfg = FluxConfig::sample(
            &op,
            &CoefficientField::constant(1.0, Point::default()),
            AdvectiveMode::Upwind,
            DiffusivityMean::Harmonic,
        )
        .unwrap();
        let disc = FvDiscretization::new(&op, cfg).unwrap();
        let data = ProblemData {
            source: &|_| 0.0,
            dirichlet: &|_| 2.5,
            neumann: &|_, _| 0.0,
            outflow: &no_outflow,
        };
        let sys = assemble_system(&op, &disc, &data).unwrap();
        let sol = solve(&sys, &SolverConfig::default()).unwrap();
        assert!(sol.report.converged);
        assert!(sol.u.iter().all(|v| (v - 2.5).abs() < 1e-7));
        for &(i, g) in &sys.dirichlet {
            assert_eq!(sol.u[i], g);
        }
    }

    #[test]
    fn assembled_rows_match_matrix_free_application() {
        let op = operator(&Domain::unit_square(), 10, BcTag::Neumann, 2);
        for mode in [AdvectiveMode::Centered, AdvectiveMode::Upwind] {
            let coeff = CoefficientField::constant(0.3, Point::new(1.0, 2.0));
            let cfg = FluxConfig::sample(&op, &coeff, mode, DiffusivityMean::Arithmetic).unwrap();
            let disc = FvDiscretization::new(&op, cfg).unwrap();
            let outflow = |f: &BoundaryFace| f.normal.x > 0.5 || f.normal.y > 0.5;
            let data = ProblemData {
                source: &|_| 0.0,
                dirichlet: &|_| 0.0,
                neumann: &|_, _| 0.0,
                outflow: &outflow,
            };
            let sys = assemble_system(&op, &disc, &data).unwrap();
            assert!(sys.face_conditions.contains(&FaceCondition::Outflow));
            for seed in 0..10 {
                let u = random_field(op.len(), seed);
                let a = sys.full.mul_vec(&u);
                let b = apply_matrix_free(&op, &disc, &sys.face_conditions, &u).unwrap();
                let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
                for (x, y) in a.iter().zip(&b) {
                    assert!((x - y).abs() <= 1e-12 * scale, "{x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn flux_moments_are_linear() {
        let op = operator(&Domain::unit_square(), 8, BcTag::Neumann, 3);
        let coeff = CoefficientField::constant(0.7, Point::new(-0.4, 1.1));
        let cfg = FluxConfig::sample(
            &op,
            &coeff,
            AdvectiveMode::Upwind,
            DiffusivityMean::Harmonic,
        )
        .unwrap();
        let disc = FvDiscretization::new(&op, cfg).unwrap();
        let u = random_field(op.len(), 10);
        let v = random_field(op.len(), 11);
        let w: Vec<f64> = u.iter().zip(&v).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        let (mu, mv, mw) = (
            disc.flux_moments(&op, &u),
            disc.flux_moments(&op, &v),
            disc.flux_moments(&op, &w),
        );
        for e in 0..mu.len() {
            for s in 0..VP1_DIM {
                let expect = 2.0 * mu[e][s] - 3.0 * mv[e][s];
                assert!((mw[e][s] - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
            }
        }
    }

    #[test]
    fn zero_velocity_gives_zero_advective_moments() {
        let op = operator(&Domain::unit_square(), 8, BcTag::Neumann, 4);
        let cfg = FluxConfig::sample(
            &op,
            &CoefficientField::constant(1.0, Point::default()),
            AdvectiveMode::Centered,
            DiffusivityMean::Harmonic,
        )
        .unwrap();
        let disc = FvDiscretization::new(&op, cfg).unwrap();
        let m = disc.advective_flux_moments(&op, &random_field(op.len(), 5));
        assert!(m.iter().all(|c| c.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn linear_advection_is_exact_in_both_modes() {
        let op = operator(&Domain::perforated_square(), 12, BcTag::Neumann, 5);
        let a = Point::new(1.0, 2.0);
        let u: Vec<f64> = op.points.iter().map(|p| 0.5 + 2.0 * p.x - p.y).collect();
        for mode in [AdvectiveMode::Centered, AdvectiveMode::Upwind] {
            let cfg = FluxConfig::sample(
                &op,
                &CoefficientField::constant(1.0, a),
                mode,
                DiffusivityMean::Harmonic,
            )
            .unwrap();
            let disc = FvDiscretization::new(&op, cfg).unwrap();
            let conds = face_conditions(&op, &no_outflow);
            let r = apply_matrix_free(&op, &disc, &conds, &u).unwrap();
            // −∇·(ε∇u − a u) = a·∇u = 0 for this pair
            for i in op.interior_indices() {
                assert!(
                    r[i].abs() / op.volumes.mu[i] < 1e-7,
                    "{mode:?}: {}",
                    r[i] / op.volumes.mu[i]
                );
            }
        }
    }

    #[test]
    fn upwind_edges_take_the_upstream_coefficients() {
        let op = operator(&Domain::unit_square(), 8, BcTag::Neumann, 6);
        let a = Point::new(1.0, 2.0);
        let cfg = FluxConfig::sample(
            &op,
            &CoefficientField::constant(1.0, a),
            AdvectiveMode::Upwind,
            DiffusivityMean::Harmonic,
        )
        .unwrap();
        let disc = FvDiscretization::new(&op, cfg).unwrap();
        let (stencils, theta) = disc.upwind.as_ref().unwrap();
        let u = random_field(op.len(), 7);
        let m = disc.advective_flux_moments(&op, &u);
        let sample: Vec<Point> = u.iter().map(|&v| a * (-v)).collect();
        for (e, &(i, j)) in op.graph.edges.iter().enumerate() {
            let downstream = a.dot(op.points[j] - op.points[i]) >= 0.0;
            assert_eq!(theta[e] == 1.0, downstream);
            let expect = stencils[if downstream { i } else { j }].apply_vector(&sample);
            assert_eq!(m[e], expect);
        }
    }

    #[test]
    fn pure_neumann_solve_is_conservative() {
        use std::f64::consts::PI;
        let op = operator(&Domain::perforated_square(), 16, BcTag::Neumann, 7);
        let cfg = FluxConfig::sample(
            &op,
            &CoefficientField::constant(1.0, Point::default()),
            AdvectiveMode::Upwind,
            DiffusivityMean::Harmonic,
        )
        .unwrap();
        let disc = FvDiscretization::new(&op, cfg).unwrap();
        let grad = |p: Point| {
            Point::new(
                2.0 * PI * (2.0 * PI * p.x).cos() * (2.0 * PI * p.y).sin(),
                2.0 * PI * (2.0 * PI * p.x).sin() * (2.0 * PI * p.y).cos(),
            )
        };
        let f = |p: Point| 8.0 * PI * PI * (2.0 * PI * p.x).sin() * (2.0 * PI * p.y).sin();
        let h = |c: Point, n: Point| grad(c).dot(n);
        let data = ProblemData {
            source: &f,
            dirichlet: &|_| 0.0,
            neumann: &h,
            outflow: &no_outflow,
        };
        let sys = assemble_system(&op, &disc, &data).unwrap();
        assert!(sys.constraint.is_some() && sys.dirichlet.is_empty());
        let sol = solve(&sys, &SolverConfig::default()).unwrap();
        assert!(sol.report.converged, "{:?}", sol.report);
        let mean: f64 = sol.u.iter().zip(&op.volumes.mu).map(|(u, m)| u * m).sum();
        assert!(mean.abs() < 1e-8);
        assert!(conservation_defect(&sys, &sol) < 1e-7);
    }

    #[test]
    fn operator_without_p2_is_rejected() {
        let domain = Domain::unit_square();
        let segs = segment_boundary(&domain, 0.125).unwrap();
        let cloud = generate_cloud(
            &domain,
            &segs,
            0.125,
            0.0,
            PerturbationMode::Componentwise,
            0,
        )
        .unwrap();
        let op = build_meshless(&cloud, &domain, &MeshlessConfig::default()).unwrap();
        let cfg = FluxConfig::sample(
            &op,
            &CoefficientField::constant(1.0, Point::default()),
            AdvectiveMode::Upwind,
            DiffusivityMean::Harmonic,
        )
        .unwrap();
        assert!(matches!(
            FvDiscretization::new(&op, cfg),
            Err(MmdError::Config(_))
        ));
    }

    #[test]
    fn solution_dumps_have_one_line_per_point() {
        let pts = [Point::new(0.0, 0.0), Point::new(1.0, 0.5)];
        let mut csv = Vec::new();
        write_solution_csv(&mut csv, &pts, &[1.0, 2.0], &[Point::default(); 2]).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 3);
        let mut vtk = Vec::new();
        write_solution_vtk(&mut vtk, &pts, &[1.0, 2.0], &[Point::default(); 2]).unwrap();
        let s = String::from_utf8(vtk).unwrap();
        assert!(s.starts_with("# vtk DataFile") && s.contains("POINTS 2 double"));
    }
}
