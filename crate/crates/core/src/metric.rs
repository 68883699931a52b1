//! Metric data of the divergence operator: virtual volumes, virtual face
//! moments from area potentials, boundary face moments, and the mesh-based
//! metric of the Cartesian oracle.

use std::io::Write;

use rayon::prelude::*;

use crate::cloud::{CloudGraph, SpatialGrid};
use crate::error::{MmdError, Result};
use crate::geometry::{BcTag, BoundarySegment, Point};
use crate::gmls::{Frame, Kernel, VecP1, VP1_DIM};
use crate::linalg::krylov::{check_compatibility, pcg, KrylovOptions, SolveReport};
use crate::linalg::sparse::graph_laplacian;
use crate::linalg::{AmgConfig, AmgPreconditioner};

/// Tolerance of the area-potential solves.
pub const METRIC_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum VolumeScheme {
    Uniform,
    #[default]
    Multiresolution,
}

impl VolumeScheme {
    pub fn name(self) -> &'static str {
        match self {
            VolumeScheme::Uniform => "uniform",
            VolumeScheme::Multiresolution => "multiresolution",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VirtualVolumes {
    pub mu: Vec<f64>,
    pub scheme: VolumeScheme,
}

impl VirtualVolumes {
    pub fn total(&self) -> f64 {
        self.mu.iter().sum()
    }
}

/// `μ_i = |Ω| / p`.
pub fn uniform_volumes(count: usize, measure: f64) -> VirtualVolumes {
    assert!(count > 0, "cloud is empty");
    VirtualVolumes {
        mu: vec![measure / count as f64; count],
        scheme: VolumeScheme::Uniform,
    }
}

/// `ρ_i = 1 / Σ_j κ(|x_i − x_j|)`, normalized so the volumes sum to `|Ω|`.
pub fn multiresolution_volumes(points: &[Point], kernel: &Kernel, measure: f64) -> VirtualVolumes {
    assert!(!points.is_empty(), "cloud is empty");
    let grid = SpatialGrid::new(points, kernel.radius);
    let rho: Vec<f64> = points
        .par_iter()
        .map(|&p| {
            let mut s = 0.0;
            grid.for_each_candidate(p, kernel.radius, |j| s += kernel.eval(p.dist(points[j])));
            1.0 / s
        })
        .collect();
    let total: f64 = rho.iter().sum();
    VirtualVolumes {
        mu: rho.iter().map(|r| r * measure / total).collect(),
        scheme: VolumeScheme::Multiresolution,
    }
}

/// A boundary face of a virtual or dual cell.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryFace {
    pub owner: usize,
    pub centroid: Point,
    pub normal: Point,
    pub measure: f64,
    pub tag: BcTag,
    /// `∫ φ_s·n dS` over the face for the global VectorP1 basis.
    pub moment: VecP1,
}

/// Exact moments `n_k φ_r(x_f) |f|` of a straight face.
pub fn face_moment(frame: &Frame, centroid: Point, normal: Point, measure: f64) -> VecP1 {
    let phi = frame.p1(centroid);
    let mut m = [0.0; VP1_DIM];
    for k in 0..2 {
        for r in 0..3 {
            m[k * 3 + r] = normal.component(k) * phi[r] * measure;
        }
    }
    m
}

/// Boundary faces of a cloud whose boundary point `n_interior + s` owns
/// segment `s`. Untagged segments count as Neumann.
pub fn boundary_face_moments(
    segments: &[BoundarySegment],
    n_interior: usize,
    frame: &Frame,
) -> Vec<BoundaryFace> {
    segments
        .iter()
        .enumerate()
        .map(|(s, seg)| BoundaryFace {
            owner: n_interior + s,
            centroid: seg.centroid,
            normal: seg.normal,
            measure: seg.measure,
            tag: seg.bc_tag.unwrap_or(BcTag::Neumann),
            moment: face_moment(frame, seg.centroid, seg.normal, seg.measure),
        })
        .collect()
}

/// `ψ_{k,r}` indexed `[k][r]`.
#[derive(Clone, Debug)]
pub struct AreaPotentials {
    pub psi: [[Vec<f64>; 3]; 2],
    pub reports: Vec<SolveReport>,
    /// Right-hand sides `b_{k,r}`, kept for residual checks.
    pub rhs: [[Vec<f64>; 3]; 2],
}

/// Solves `L_r ψ_{k,r} = b_{k,r}` with
/// `b_i = μ_i ∂_k φ_r − Σ_{faces of i} n_k φ_r(x_f) |f|` for all six `(k, r)`.
/// Every boundary face enters the right-hand side.
pub fn solve_area_potentials(
    points: &[Point],
    graph: &CloudGraph,
    volumes: &[f64],
    boundary: &[BoundaryFace],
    frame: &Frame,
    amg: AmgConfig,
) -> Result<AreaPotentials> {
    let n = points.len();
    let mut rhs: [[Vec<f64>; 3]; 2] = Default::default();
    for k in 0..2 {
        for r in 0..3 {
            let dphi = if r == k + 1 { 1.0 } else { 0.0 };
            let mut b: Vec<f64> = volumes.iter().map(|m| m * dphi).collect();
            for f in boundary {
                b[f.owner] -= f.moment[k * 3 + r];
            }
            check_compatibility(
                &b,
                &format!("area potential rhs (k = {}, r = {})", k + 1, r + 1),
            )?;
            rhs[k][r] = b;
        }
    }
    let mids: Vec<Point> = graph
        .edges
        .iter()
        .map(|&(i, j)| points[i].midpoint(points[j]))
        .collect();
    let solved: Vec<Result<(usize, [Vec<f64>; 2], Vec<SolveReport>)>> = (0..3)
        .into_par_iter()
        .map(|r| {
            let weights: Vec<f64> = mids.iter().map(|&m| frame.p1(m)[r]).collect();
            if weights.iter().any(|&w| !(w > 0.0)) {
                return Err(MmdError::Internal(
                    "nonpositive Laplacian weight; coordinates are not shifted".into(),
                ));
            }
            let lap = graph_laplacian(n, &graph.edges, &weights);
            let pre = AmgPreconditioner::new(&lap, amg);
            let opts = KrylovOptions::new(METRIC_TOL, 500).deflated();
            let mut out: [Vec<f64>; 2] = Default::default();
            let mut reports = Vec::new();
            for k in 0..2 {
                let (x, rep) = pcg(&lap, &rhs[k][r], &opts, &pre)?;
                let rep = rep.into_result()?;
                out[k] = x;
                reports.push(rep);
            }
            Ok((r, out, reports))
        })
        .collect();
    let mut psi: [[Vec<f64>; 3]; 2] = Default::default();
    let mut reports = Vec::new();
    for res in solved {
        let (r, [p0, p1], reps) = res?;
        psi[0][r] = p0;
        psi[1][r] = p1;
        reports.extend(reps);
    }
    Ok(AreaPotentials { psi, reports, rhs })
}

/// `(μ_ij)_{k,r} = (ψ_{k,r,i} − ψ_{k,r,j}) φ_r(x_ij)` for each stored edge
/// `i < j`, oriented from `i` to `j`.
pub fn assemble_face_moments(
    potentials: &AreaPotentials,
    points: &[Point],
    graph: &CloudGraph,
    frame: &Frame,
) -> Vec<VecP1> {
    graph
        .edges
        .par_iter()
        .map(|&(i, j)| {
            let phi = frame.p1(points[i].midpoint(points[j]));
            let mut m = [0.0; VP1_DIM];
            for k in 0..2 {
                for r in 0..3 {
                    let psi = &potentials.psi[k][r];
                    m[k * 3 + r] = (psi[i] - psi[j]) * phi[r];
                }
            }
            m
        })
        .collect()
}

/// Largest `|Σ_j (μ_ij)_{k,r} − b_{k,r,i}|` over points and indices, and the
/// largest `|b|`.
pub fn reproduction_residual(
    potentials: &AreaPotentials,
    graph: &CloudGraph,
    moments: &[VecP1],
) -> (f64, f64) {
    let n = graph.n_vertices();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for k in 0..2 {
        for r in 0..3 {
            let s = k * 3 + r;
            let mut sum = vec![0.0; n];
            for (e, &(i, j)) in graph.edges.iter().enumerate() {
                sum[i] += moments[e][s];
                sum[j] -= moments[e][s];
            }
            for i in 0..n {
                worst = worst.max((sum[i] - potentials.rhs[k][r][i]).abs());
                scale = scale.max(potentials.rhs[k][r][i].abs());
            }
        }
    }
    (worst, scale)
}

/// Mesh-based metric on the unit-square lattice `{k h : 0 ≤ k ≤ N}²` with
/// 4-neighbor edges and clipped square dual cells.
#[derive(Clone, Debug)]
pub struct CartesianDualMesh {
    pub n: usize,
    pub h: f64,
    /// Row-major nodes, `index = j (N + 1) + i`.
    pub points: Vec<Point>,
    pub volumes: Vec<f64>,
    /// Edges `(a, b)` with `a < b`, oriented from `a` to `b`.
    pub edges: Vec<(usize, usize)>,
    pub face_centroids: Vec<Point>,
    pub face_normals: Vec<Point>,
    pub face_measures: Vec<f64>,
    pub boundary: Vec<(usize, Point, Point, f64)>,
}

impl CartesianDualMesh {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "lattice needs at least one cell");
        let h = 1.0 / n as f64;
        let m = n + 1;
        let coord = |k: usize| k as f64 * h;
        // dual interval of lattice index k, clipped to [0, 1]
        let dual = |k: usize| {
            let lo = if k == 0 { 0.0 } else { coord(k) - 0.5 * h };
            let hi = if k == n { 1.0 } else { coord(k) + 0.5 * h };
            (lo, hi)
        };
        let mut points = Vec::with_capacity(m * m);
        let mut volumes = Vec::with_capacity(m * m);
        for j in 0..m {
            for i in 0..m {
                points.push(Point::new(coord(i), coord(j)));
                let (x0, x1) = dual(i);
                let (y0, y1) = dual(j);
                volumes.push((x1 - x0) * (y1 - y0));
            }
        }
        let mut edges = Vec::new();
        let mut face_centroids = Vec::new();
        let mut face_normals = Vec::new();
        let mut face_measures = Vec::new();
        for j in 0..m {
            for i in 0..m {
                let a = j * m + i;
                if i + 1 < m {
                    let (y0, y1) = dual(j);
                    edges.push((a, a + 1));
                    face_centroids.push(Point::new(coord(i) + 0.5 * h, 0.5 * (y0 + y1)));
                    face_normals.push(Point::new(1.0, 0.0));
                    face_measures.push(y1 - y0);
                }
                if j + 1 < m {
                    let (x0, x1) = dual(i);
                    edges.push((a, a + m));
                    face_centroids.push(Point::new(0.5 * (x0 + x1), coord(j) + 0.5 * h));
                    face_normals.push(Point::new(0.0, 1.0));
                    face_measures.push(x1 - x0);
                }
            }
        }
        let mut boundary = Vec::new();
        for j in 0..m {
            for i in 0..m {
                let a = j * m + i;
                let (x0, x1) = dual(i);
                let (y0, y1) = dual(j);
                if j == 0 {
                    boundary.push((
                        a,
                        Point::new(0.5 * (x0 + x1), 0.0),
                        Point::new(0.0, -1.0),
                        x1 - x0,
                    ));
                }
                if j == n {
                    boundary.push((
                        a,
                        Point::new(0.5 * (x0 + x1), 1.0),
                        Point::new(0.0, 1.0),
                        x1 - x0,
                    ));
                }
                if i == 0 {
                    boundary.push((
                        a,
                        Point::new(0.0, 0.5 * (y0 + y1)),
                        Point::new(-1.0, 0.0),
                        y1 - y0,
                    ));
                }
                if i == n {
                    boundary.push((
                        a,
                        Point::new(1.0, 0.5 * (y0 + y1)),
                        Point::new(1.0, 0.0),
                        y1 - y0,
                    ));
                }
            }
        }
        Self {
            n,
            h,
            points,
            volumes,
            edges,
            face_centroids,
            face_normals,
            face_measures,
            boundary,
        }
    }

    pub fn is_boundary_node(&self, a: usize) -> bool {
        let m = self.n + 1;
        let (i, j) = (a % m, a / m);
        i == 0 || j == 0 || i == self.n || j == self.n
    }

    /// Exact face moments `n_k φ_r(x_f) |f|` per edge.
    pub fn face_moments(&self, frame: &Frame) -> Vec<VecP1> {
        (0..self.edges.len())
            .map(|e| {
                face_moment(
                    frame,
                    self.face_centroids[e],
                    self.face_normals[e],
                    self.face_measures[e],
                )
            })
            .collect()
    }

    pub fn boundary_faces(
        &self,
        frame: &Frame,
        tag: impl Fn(Point, Point) -> BcTag,
    ) -> Vec<BoundaryFace> {
        self.boundary
            .iter()
            .map(|&(owner, c, nrm, len)| BoundaryFace {
                owner,
                centroid: c,
                normal: nrm,
                measure: len,
                tag: tag(c, nrm),
                moment: face_moment(frame, c, nrm, len),
            })
            .collect()
    }
}

/// Writes `id,x,y,mu` for the volumes and `edge,i,j,m0..m5` for the moments.
pub fn write_metric_csv<W: Write>(
    mut out: W,
    points: &[Point],
    volumes: &[f64],
    edges: &[(usize, usize)],
    moments: &[VecP1],
) -> Result<()> {
    writeln!(out, "id,x,y,mu")?;
    for (i, (p, m)) in points.iter().zip(volumes).enumerate() {
        writeln!(out, "{i},{:.17e},{:.17e},{:.17e}", p.x, p.y, m)?;
    }
    writeln!(out, "edge,i,j,m0,m1,m2,m3,m4,m5")?;
    for (e, (&(i, j), m)) in edges.iter().zip(moments).enumerate() {
        write!(out, "{e},{i},{j}")?;
        for v in m {
            write!(out, ",{v:.17e}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{build_graph, generate_cloud, PerturbationMode};
    use crate::geometry::{segment_boundary, Domain};

    #[test]
    fn uniform_volumes_basics() {
        let v = uniform_volumes(4, 1.0);
        assert_eq!(v.mu, vec![0.25; 4]);
        assert_eq!(v.total(), 1.0);
    }

    #[test]
    fn uniform_volumes_minimize_sum_of_squares() {
        let v = uniform_volumes(10, 0.92);
        let base: f64 = v.mu.iter().map(|m| m * m).sum();
        let mut s = 5u64;
        for _ in 0..20 {
            let mut d: Vec<f64> = (0..10)
                .map(|_| {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
                    ((s >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 0.01
                })
                .collect();
            let mean = d.iter().sum::<f64>() / 10.0;
            d.iter_mut().for_each(|x| *x -= mean);
            let pert: f64 = v.mu.iter().zip(&d).map(|(m, e)| (m + e) * (m + e)).sum();
            assert!(pert > base);
        }
    }

    #[test]
    fn multiresolution_volumes_basics() {
        let k = Kernel::new(0.3);
        let one = multiresolution_volumes(&[Point::new(0.5, 0.5)], &k, 0.92);
        assert_eq!(one.mu, vec![0.92]);
        let pts = [
            Point::new(0.2, 0.5),
            Point::new(0.4, 0.5),
            Point::new(0.6, 0.5),
            Point::new(0.8, 0.5),
        ];
        let v = multiresolution_volumes(&pts, &k, 1.0);
        assert!((v.mu[0] - v.mu[3]).abs() < 1e-15 && (v.mu[1] - v.mu[2]).abs() < 1e-15);
        assert!((v.total() - 1.0).abs() < 1e-15);
        assert!(v.mu.iter().all(|&m| m > 0.0));
    }

    #[test]
    fn multiresolution_volumes_on_lattice_interior() {
        let d = Domain::unit_square();
        let h = 1.0 / 20.0;
        let segs = segment_boundary(&d, h).unwrap();
        let c = generate_cloud(&d, &segs, h, 0.0, PerturbationMode::Componentwise, 0).unwrap();
        let v = multiresolution_volumes(&c.points, &Kernel::new(2.5 * h), 1.0);
        let inner: Vec<f64> = (0..c.n_interior)
            .filter(|&i| d.boundary_distance(c.points[i]) > 3.0 * h)
            .map(|i| v.mu[i])
            .collect();
        let mean = inner.iter().sum::<f64>() / inner.len() as f64;
        let sd =
            (inner.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / inner.len() as f64).sqrt();
        assert!(sd / mean < 0.05);
        assert!((v.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bottom_segment_moments() {
        let frame = Frame {
            origin: Point::new(-0.1, -0.1),
        };
        let h = 0.25;
        let m = face_moment(&frame, Point::new(h / 2.0, 0.0), Point::new(0.0, -1.0), h);
        assert_eq!(m[3], -h);
        assert_eq!(m[0], 0.0);
        let d = Domain::unit_square();
        let segs = segment_boundary(&d, h).unwrap();
        let faces = boundary_face_moments(&segs, 0, &frame);
        for s in [0, 3] {
            let total: f64 = faces.iter().map(|f| f.moment[s]).sum();
            assert!(total.abs() < 1e-15);
        }
    }

    fn metric_for(n: usize, pert: f64) -> (Vec<Point>, CloudGraph, AreaPotentials, Vec<VecP1>) {
        let d = Domain::perforated_square();
        let h = 1.0 / n as f64;
        let segs = segment_boundary(&d, h).unwrap();
        let c = generate_cloud(&d, &segs, h, pert, PerturbationMode::Componentwise, 3).unwrap();
        let g = build_graph(&c.points, 2.5 * h).unwrap();
        let frame = Frame::for_domain(&d);
        let vols = multiresolution_volumes(&c.points, &Kernel::new(2.5 * h), d.measure);
        let faces = boundary_face_moments(&c.segments, c.n_interior, &frame);
        let pot = solve_area_potentials(
            &c.points,
            &g,
            &vols.mu,
            &faces,
            &frame,
            AmgConfig::default(),
        )
        .unwrap();
        let mom = assemble_face_moments(&pot, &c.points, &g, &frame);
        (c.points, g, pot, mom)
    }

    #[test]
    fn potentials_reproduce_moment_equations() {
        let (_, g, pot, mom) = metric_for(16, 0.2);
        let (res, scale) = reproduction_residual(&pot, &g, &mom);
        assert!(res <= 1e-8 * scale, "{res} vs {scale}");
        for k in 0..2 {
            for r in 0..3 {
                assert!(pot.psi[k][r].iter().sum::<f64>().abs() < 1e-10);
            }
        }
        assert_eq!(pot.reports.len(), 6);
    }

    #[test]
    fn constant_potential_gives_zero_moments() {
        let (pts, g, mut pot, _) = metric_for(8, 0.0);
        for k in 0..2 {
            for r in 0..3 {
                pot.psi[k][r].iter_mut().for_each(|v| *v = 3.5);
            }
        }
        let frame = Frame::for_domain(&Domain::perforated_square());
        assert!(assemble_face_moments(&pot, &pts, &g, &frame)
            .iter()
            .all(|m| m.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn incompatible_rhs_names_the_index() {
        let d = Domain::unit_square();
        let h = 0.25;
        let segs = segment_boundary(&d, h).unwrap();
        let c = generate_cloud(&d, &segs, h, 0.0, PerturbationMode::Componentwise, 0).unwrap();
        let g = build_graph(&c.points, 2.5 * h).unwrap();
        let frame = Frame::for_domain(&d);
        // volumes summing to 2 |Ω| break compatibility for the r = 2, 3 systems
        let vols = uniform_volumes(c.len(), 2.0);
        let faces = boundary_face_moments(&c.segments, c.n_interior, &frame);
        let err = solve_area_potentials(
            &c.points,
            &g,
            &vols.mu,
            &faces,
            &frame,
            AmgConfig::default(),
        )
        .unwrap_err();
        match err {
            MmdError::Incompatible { context, .. } => {
                assert!(context.contains("k = 1, r = 2"), "{context}")
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn cartesian_dual_mesh_geometry() {
        let mesh = CartesianDualMesh::new(4);
        assert!((mesh.volumes.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(mesh.volumes[0], 1.0 / 64.0);
        assert_eq!(mesh.edges.len(), 2 * 4 * 5);
        let frame = Frame {
            origin: Point::new(-0.1, -0.1),
        };
        let moments = mesh.face_moments(&frame);
        // an interior vertical face of length h with normal e1
        let e = mesh
            .edges
            .iter()
            .position(|&(a, b)| a == 6 && b == 7)
            .unwrap();
        assert_eq!(mesh.face_measures[e], 0.25);
        assert_eq!(moments[e][0], 0.25);
        // closed dual cells: P1 moments sum to μ_i ∂_k φ_r
        let faces = mesh.boundary_faces(&frame, |_, _| BcTag::Neumann);
        for a in 0..mesh.points.len() {
            for s in 0..6 {
                let mut sum = 0.0;
                for (e, &(p, q)) in mesh.edges.iter().enumerate() {
                    if p == a {
                        sum += moments[e][s];
                    } else if q == a {
                        sum -= moments[e][s];
                    }
                }
                sum += faces
                    .iter()
                    .filter(|f| f.owner == a)
                    .map(|f| f.moment[s])
                    .sum::<f64>();
                let expect = if s == 1 || s == 5 {
                    mesh.volumes[a]
                } else {
                    0.0
                };
                assert!(
                    (sum - expect).abs() < 1e-14,
                    "node {a} s {s}: {sum} vs {expect}"
                );
            }
        }
    }
}
