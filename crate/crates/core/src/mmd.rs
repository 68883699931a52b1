//! The mimetic divergence operator
//! `(DIV u)_i = (1/μ_i) [Σ_j c_ij·μ_ij + Σ_{boundary faces of i} F_f]`
//! in its meshless and Cartesian-oracle instances, with conservation checks.

use rayon::prelude::*;

use crate::cloud::{build_graph, graph_from_edges, CloudGraph, PointCloud, SpatialGrid};
use crate::error::{MmdError, Result};
use crate::geometry::{BcTag, Domain, Point};
use crate::gmls::{
    nodal_p1_stencils, nodal_p2_gradient_stencils, nodal_vector_coefficients, p1_stencil,
    support_neighbors, Frame, Kernel, Stencil, VecP1, VP1_DIM,
};
use crate::linalg::{AmgConfig, SolveReport};
use crate::metric::{
    assemble_face_moments, boundary_face_moments, multiresolution_volumes, solve_area_potentials,
    uniform_volumes, BoundaryFace, CartesianDualMesh, VirtualVolumes, VolumeScheme,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Instance {
    Meshless,
    CartesianOracle,
}

/// How point samples become field moments.
#[derive(Clone, Debug)]
pub enum FieldTransfer {
    /// `c_ij = θ c_i + (1 − θ) c_j` from fits anchored at the points.
    Nodal { stencils: Vec<Stencil>, theta: f64 },
    /// Fits anchored at the face centroids.
    Face {
        edge_stencils: Vec<Stencil>,
        boundary_stencils: Vec<Stencil>,
    },
}

#[derive(Clone, Debug)]
pub struct MeshlessConfig {
    /// Graph radius `ε_g` in units of the lattice spacing.
    pub graph_factor: f64,
    pub volume_scheme: VolumeScheme,
    /// Radius growth factor after a unisolvency failure.
    pub growth: f64,
    pub max_retries: usize,
    /// Also build P2 gradient stencils (needed by the diffusive flux).
    pub require_p2: bool,
    pub amg: AmgConfig,
}

impl Default for MeshlessConfig {
    fn default() -> Self {
        Self {
            graph_factor: 2.5,
            volume_scheme: VolumeScheme::Multiresolution,
            growth: 1.25,
            max_retries: 4,
            require_p2: false,
            amg: AmgConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MmdOperator {
    pub instance: Instance,
    pub points: Vec<Point>,
    pub is_boundary: Vec<bool>,
    pub graph: CloudGraph,
    pub kernel: Kernel,
    pub frame: Frame,
    pub volumes: VirtualVolumes,
    /// Oriented from the lower to the higher endpoint index.
    pub face_moments: Vec<VecP1>,
    pub face_centroids: Vec<Point>,
    pub boundary_faces: Vec<BoundaryFace>,
    pub transfer: FieldTransfer,
    pub p2_gradient: Option<Vec<Stencil>>,
    pub metric_reports: Vec<SolveReport>,
    /// Graph radius actually used after unisolvency retries.
    pub radius_retries: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConservationReport {
    /// `Σ_{i∈C} μ_i (DIV u)_i`.
    pub lhs: f64,
    /// Cut-set and boundary flux recomputed from the edges.
    pub rhs: f64,
    pub residual: f64,
    /// Sum of magnitudes of all terms, for relative tolerances.
    pub scale: f64,
}

impl ConservationReport {
    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.residual.abs() / self.scale
        } else {
            self.residual.abs()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruncationError {
    /// `sqrt(Σ e_i²)` over interior points.
    pub l2: f64,
    /// `l2` divided by the same norm of the exact values.
    pub relative: f64,
    /// `sqrt(Σ μ_i e_i²)`.
    pub l2_weighted: f64,
    /// `sqrt(Σ e_i² / count)`.
    pub rms: f64,
    pub max: f64,
    pub count: usize,
}

impl TruncationError {
    pub fn from_errors(errors: &[f64], exact: &[f64], volumes: &[f64]) -> Self {
        let sq: f64 = errors.iter().map(|e| e * e).sum();
        let ex: f64 = exact.iter().map(|v| v * v).sum();
        let w: f64 = errors.iter().zip(volumes).map(|(e, m)| m * e * e).sum();
        let count = errors.len();
        Self {
            l2: sq.sqrt(),
            relative: if ex > 0.0 {
                (sq / ex).sqrt()
            } else {
                sq.sqrt()
            },
            l2_weighted: w.sqrt(),
            rms: (sq / count.max(1) as f64).sqrt(),
            max: errors.iter().fold(0.0, |m, e| m.max(e.abs())),
            count,
        }
    }
}

impl MmdOperator {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn interior_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_boundary[i]).collect()
    }

    /// Nodal VectorP1 coefficients, when the transfer is nodal.
    pub fn nodal_coefficients(&self, field: &[Point]) -> Option<Vec<VecP1>> {
        match &self.transfer {
            FieldTransfer::Nodal { stencils, .. } => {
                Some(nodal_vector_coefficients(stencils, field))
            }
            FieldTransfer::Face { .. } => None,
        }
    }

    /// Field moments `c_ij` per edge.
    pub fn face_coefficients(&self, field: &[Point]) -> Vec<VecP1> {
        match &self.transfer {
            FieldTransfer::Nodal { stencils, theta } => {
                let nodal = nodal_vector_coefficients(stencils, field);
                self.graph
                    .edges
                    .par_iter()
                    .map(|&(i, j)| {
                        let mut c = [0.0; VP1_DIM];
                        for s in 0..VP1_DIM {
                            c[s] = theta * nodal[i][s] + (1.0 - theta) * nodal[j][s];
                        }
                        c
                    })
                    .collect()
            }
            FieldTransfer::Face { edge_stencils, .. } => edge_stencils
                .par_iter()
                .map(|s| s.apply_vector(field))
                .collect(),
        }
    }

    /// Coefficients used on each boundary face with a Dirichlet tag.
    pub fn boundary_coefficients(&self, field: &[Point]) -> Vec<VecP1> {
        match &self.transfer {
            FieldTransfer::Nodal { stencils, .. } => self
                .boundary_faces
                .iter()
                .map(|f| stencils[f.owner].apply_vector(field))
                .collect(),
            FieldTransfer::Face {
                boundary_stencils, ..
            } => boundary_stencils
                .iter()
                .map(|s| s.apply_vector(field))
                .collect(),
        }
    }

    /// Flux through each boundary face: the midpoint rule for Neumann faces
    /// (using `exact` when given, otherwise the owner's sample) and
    /// `c·μ_Γ` for Dirichlet faces.
    pub fn boundary_fluxes(
        &self,
        field: &[Point],
        exact: Option<&(dyn Fn(Point) -> Point + Sync)>,
    ) -> Vec<f64> {
        let coeffs = self.boundary_coefficients(field);
        self.boundary_faces
            .iter()
            .zip(&coeffs)
            .map(|(f, c)| match f.tag {
                BcTag::Neumann => {
                    let u = exact.map_or(field[f.owner], |g| g(f.centroid));
                    u.dot(f.normal) * f.measure
                }
                BcTag::Dirichlet => c.iter().zip(&f.moment).map(|(a, b)| a * b).sum(),
            })
            .collect()
    }

    /// `(DIV u)_i` from field moments and boundary fluxes.
    pub fn apply_div(&self, face_coeffs: &[VecP1], boundary_flux: &[f64]) -> Result<Vec<f64>> {
        if face_coeffs.len() != self.graph.edges.len() {
            return Err(MmdError::Internal(format!(
                "{} field moments for {} edges",
                face_coeffs.len(),
                self.graph.edges.len()
            )));
        }
        if boundary_flux.len() != self.boundary_faces.len() {
            return Err(MmdError::Internal(format!(
                "{} boundary fluxes for {} boundary faces",
                boundary_flux.len(),
                self.boundary_faces.len()
            )));
        }
        let mut acc = vec![0.0; self.len()];
        for (e, &(i, j)) in self.graph.edges.iter().enumerate() {
            let flux = dot6(&face_coeffs[e], &self.face_moments[e]);
            acc[i] += flux;
            acc[j] -= flux;
        }
        for (f, &q) in self.boundary_faces.iter().zip(boundary_flux) {
            acc[f.owner] += q;
        }
        Ok(acc
            .iter()
            .zip(&self.volumes.mu)
            .map(|(a, m)| a / m)
            .collect())
    }

    /// DIV of a sampled vector field.
    pub fn div(
        &self,
        field: &[Point],
        exact: Option<&(dyn Fn(Point) -> Point + Sync)>,
    ) -> Result<Vec<f64>> {
        let c = self.face_coefficients(field);
        let b = self.boundary_fluxes(field, exact);
        self.apply_div(&c, &b)
    }

    /// Compares `Σ_{i∈C} μ_i (DIV u)_i` with the flux through the edges
    /// leaving `C` plus the boundary faces owned by `C`.
    pub fn local_conservation_check(
        &self,
        face_coeffs: &[VecP1],
        boundary_flux: &[f64],
        subset: &[usize],
    ) -> Result<ConservationReport> {
        if subset.is_empty() {
            return Err(MmdError::Config("conservation subset is empty".into()));
        }
        let div = self.apply_div(face_coeffs, boundary_flux)?;
        let mut inside = vec![false; self.len()];
        for &i in subset {
            inside[i] = true;
        }
        let lhs: f64 = subset.iter().map(|&i| self.volumes.mu[i] * div[i]).sum();
        let mut rhs = 0.0;
        let mut scale = 0.0;
        for (e, &(i, j)) in self.graph.edges.iter().enumerate() {
            if inside[i] != inside[j] {
                let flux = dot6(&face_coeffs[e], &self.face_moments[e]);
                rhs += if inside[i] { flux } else { -flux };
            }
            if inside[i] || inside[j] {
                scale += dot6(&face_coeffs[e], &self.face_moments[e]).abs();
            }
        }
        for (f, &q) in self.boundary_faces.iter().zip(boundary_flux) {
            if inside[f.owner] {
                rhs += q;
                scale += q.abs();
            }
        }
        Ok(ConservationReport {
            lhs,
            rhs,
            residual: lhs - rhs,
            scale,
        })
    }

    /// The whole-domain statement: `Σ_i μ_i (DIV u)_i = Σ_f F_f`.
    pub fn global_conservation_check(
        &self,
        face_coeffs: &[VecP1],
        boundary_flux: &[f64],
    ) -> Result<ConservationReport> {
        let div = self.apply_div(face_coeffs, boundary_flux)?;
        let lhs: f64 = div.iter().zip(&self.volumes.mu).map(|(d, m)| d * m).sum();
        let rhs: f64 = boundary_flux.iter().sum();
        let scale: f64 = boundary_flux.iter().map(|q| q.abs()).sum::<f64>()
            + div
                .iter()
                .zip(&self.volumes.mu)
                .map(|(d, m)| (d * m).abs())
                .sum::<f64>();
        Ok(ConservationReport {
            lhs,
            rhs,
            residual: lhs - rhs,
            scale,
        })
    }

    /// DIV of the sampled analytic field against the analytic divergence at
    /// interior points.
    pub fn truncation_error(
        &self,
        u: &(dyn Fn(Point) -> Point + Sync),
        div_u: &dyn Fn(Point) -> f64,
    ) -> Result<TruncationError> {
        let field: Vec<Point> = self.points.iter().map(|&p| u(p)).collect();
        let div = self.div(&field, Some(u))?;
        let interior = self.interior_indices();
        let exact: Vec<f64> = interior.iter().map(|&i| div_u(self.points[i])).collect();
        let errors: Vec<f64> = interior
            .iter()
            .zip(&exact)
            .map(|(&i, e)| div[i] - e)
            .collect();
        let vols: Vec<f64> = interior.iter().map(|&i| self.volumes.mu[i]).collect();
        Ok(TruncationError::from_errors(&errors, &exact, &vols))
    }
}

fn dot6(a: &VecP1, b: &VecP1) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn is_unisolvency(e: &MmdError) -> bool {
    matches!(e, MmdError::Unisolvency { .. })
}

/// Meshless instance: ε-ball graph, nodal GMLS transfer with `θ = 1/2`,
/// virtual volumes and virtual face moments from the area potentials. The
/// graph radius grows by `config.growth` after each unisolvency failure.
pub fn build_meshless(
    cloud: &PointCloud,
    domain: &Domain,
    config: &MeshlessConfig,
) -> Result<MmdOperator> {
    let points = &cloud.points;
    let frame = Frame::for_domain(domain);
    let mut radius = config.graph_factor * cloud.h_target;
    let mut attempt = 0;
    let (graph, kernel, stencils, p2) = loop {
        let graph = build_graph(points, radius)?;
        let kernel = Kernel::new(radius);
        let built = nodal_p1_stencils(points, &graph, &kernel, &frame).and_then(|st| {
            let p2 = if config.require_p2 {
                Some(nodal_p2_gradient_stencils(points, &graph, &kernel, &frame)?)
            } else {
                None
            };
            Ok((st, p2))
        });
        match built {
            Ok((st, p2)) => break (graph, kernel, st, p2),
            Err(e) if is_unisolvency(&e) && attempt < config.max_retries => {
                log::warn!(
                    "{e}; growing the graph radius from {radius} to {}",
                    radius * config.growth
                );
                radius *= config.growth;
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    };
    let volumes = match config.volume_scheme {
        VolumeScheme::Uniform => uniform_volumes(points.len(), domain.measure),
        VolumeScheme::Multiresolution => multiresolution_volumes(points, &kernel, domain.measure),
    };
    let boundary_faces = boundary_face_moments(&cloud.segments, cloud.n_interior, &frame);
    let potentials = solve_area_potentials(
        points,
        &graph,
        &volumes.mu,
        &boundary_faces,
        &frame,
        config.amg,
    )?;
    let face_moments = assemble_face_moments(&potentials, points, &graph, &frame);
    let face_centroids = graph
        .edges
        .iter()
        .map(|&(i, j)| points[i].midpoint(points[j]))
        .collect();
    Ok(MmdOperator {
        instance: Instance::Meshless,
        points: points.clone(),
        is_boundary: (0..points.len()).map(|i| cloud.is_boundary(i)).collect(),
        graph,
        kernel,
        frame,
        volumes,
        face_moments,
        face_centroids,
        boundary_faces,
        transfer: FieldTransfer::Nodal {
            stencils,
            theta: 0.5,
        },
        p2_gradient: p2,
        metric_reports: potentials.reports,
        radius_retries: attempt,
    })
}

/// Cartesian oracle on the unit square: lattice nodes including the boundary,
/// clipped square dual cells with exact face moments, and GMLS fits anchored
/// at the face centroids with support `kernel_factor · h`.
pub fn build_cartesian_oracle(
    n: usize,
    kernel_factor: f64,
    tag: impl Fn(Point, Point) -> BcTag,
) -> Result<MmdOperator> {
    let mesh = CartesianDualMesh::new(n);
    let domain = Domain::unit_square();
    let frame = Frame::for_domain(&domain);
    let kernel = Kernel::new(kernel_factor * mesh.h);
    let graph = graph_from_edges(mesh.points.len(), &mesh.edges, mesh.h)?;
    let face_moments = mesh.face_moments(&frame);
    let boundary_faces = mesh.boundary_faces(&frame, tag);
    let grid = SpatialGrid::new(&mesh.points, kernel.radius);
    let fit = |anchor: Point| {
        let nb = support_neighbors(&grid, &mesh.points, anchor, kernel.radius);
        let count = nb.len();
        p1_stencil(&mesh.points, anchor, nb, &kernel, &frame).ok_or(MmdError::Unisolvency {
            point: usize::MAX,
            basis: "P1",
            neighbors: count,
        })
    };
    let edge_stencils = mesh
        .face_centroids
        .par_iter()
        .map(|&c| fit(c))
        .collect::<Result<Vec<_>>>()?;
    let boundary_stencils = boundary_faces
        .iter()
        .map(|f| fit(f.centroid))
        .collect::<Result<Vec<_>>>()?;
    let is_boundary = (0..mesh.points.len())
        .map(|a| mesh.is_boundary_node(a))
        .collect();
    Ok(MmdOperator {
        instance: Instance::CartesianOracle,
        points: mesh.points.clone(),
        is_boundary,
        graph,
        kernel,
        frame,
        volumes: VirtualVolumes {
            mu: mesh.volumes.clone(),
            scheme: VolumeScheme::Uniform,
        },
        face_moments,
        face_centroids: mesh.face_centroids.clone(),
        boundary_faces,
        transfer: FieldTransfer::Face {
            edge_stencils,
            boundary_stencils,
        },
        p2_gradient: None,
        metric_reports: Vec::new(),
        radius_retries: 0,
    })
}

/// The smooth test field `2π (cos 2πx sin 2πy, sin 2πx cos 2πy)`.
pub fn sinusoidal_field(p: Point) -> Point {
    use std::f64::consts::PI;
    let (sx, cx) = (2.0 * PI * p.x).sin_cos();
    let (sy, cy) = (2.0 * PI * p.y).sin_cos();
    Point::new(2.0 * PI * cx * sy, 2.0 * PI * sx * cy)
}

/// Divergence of [`sinusoidal_field`]: `−8π² sin 2πx sin 2πy`.
pub fn sinusoidal_divergence(p: Point) -> f64 {
    use std::f64::consts::PI;
    -8.0 * PI * PI * (2.0 * PI * p.x).sin() * (2.0 * PI * p.y).sin()
}
