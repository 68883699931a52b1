//! Generalized moving least squares.
//!
//! Fits are computed in local coordinates `(x − anchor) / ε_κ` for
//! conditioning and then re-expressed in the global shifted basis
//! `{1, x', y'}` of a [`Frame`], which is the basis the face moments use.
//! Every fit is linear in the samples, so each point stores a stencil: the
//! matrix mapping neighbor samples to coefficients.

use rayon::prelude::*;

use crate::cloud::{CloudGraph, SpatialGrid};
use crate::error::{MmdError, Result};
use crate::geometry::{Domain, Point};
use crate::linalg::dense::{PivotedQr, RANK_TOL};

/// Number of scalar P1 terms in 2D.
pub const P1_DIM: usize = 3;
/// Number of VectorP1 terms in 2D; index `s = k·3 + r`.
pub const VP1_DIM: usize = 6;

pub type VecP1 = [f64; VP1_DIM];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisKind {
    ScalarP1,
    ScalarP2,
    VectorP1,
}

impl BasisKind {
    pub fn dim(self) -> usize {
        match self {
            BasisKind::ScalarP1 => 3,
            BasisKind::ScalarP2 => 6,
            BasisKind::VectorP1 => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BasisKind::ScalarP1 => "P1",
            BasisKind::ScalarP2 => "P2",
            BasisKind::VectorP1 => "vector P1",
        }
    }
}

/// Monomials in `(x − center) / scale`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolyBasis {
    pub kind: BasisKind,
    pub center: Point,
    pub scale: f64,
}

impl PolyBasis {
    pub fn new(kind: BasisKind, center: Point, scale: f64) -> Self {
        Self {
            kind,
            center,
            scale,
        }
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    fn scalar_terms(&self, p: Point, quadratic: bool) -> Vec<f64> {
        let x = (p.x - self.center.x) / self.scale;
        let y = (p.y - self.center.y) / self.scale;
        if quadratic {
            vec![1.0, x, y, x * x, x * y, y * y]
        } else {
            vec![1.0, x, y]
        }
    }

    /// Scalar bases: one value per term. VectorP1: the 6 × 2 matrix
    /// flattened as `[φ_s]_x` for all `s`, then `[φ_s]_y`.
    pub fn eval(&self, p: Point) -> Vec<f64> {
        match self.kind {
            BasisKind::ScalarP1 => self.scalar_terms(p, false),
            BasisKind::ScalarP2 => self.scalar_terms(p, true),
            BasisKind::VectorP1 => {
                let s = self.scalar_terms(p, false);
                let mut out = vec![0.0; 2 * VP1_DIM];
                for r in 0..3 {
                    out[r] = s[r];
                    out[VP1_DIM + 3 + r] = s[r];
                }
                out
            }
        }
    }
}

/// Wendland-type weight `(1 − ρ/ε)⁴₊`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kernel {
    pub radius: f64,
}

impl Kernel {
    pub fn new(radius: f64) -> Self {
        assert!(radius > 0.0, "kernel support must be positive");
        Self { radius }
    }

    pub fn eval(&self, rho: f64) -> f64 {
        if rho < self.radius {
            let t = 1.0 - rho / self.radius;
            (t * t) * (t * t)
        } else {
            0.0
        }
    }
}

/// Translation making every domain coordinate at least `δ = 0.1·diam(Ω)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub origin: Point,
}

impl Frame {
    pub fn for_domain(domain: &Domain) -> Self {
        let (lo, _) = domain.bounding_box();
        let delta = 0.1 * domain.diameter();
        Self {
            origin: Point::new(lo.x - delta, lo.y - delta),
        }
    }

    pub fn shifted(&self, p: Point) -> Point {
        p - self.origin
    }

    /// `{1, x', y'}` at `p`.
    pub fn p1(&self, p: Point) -> [f64; 3] {
        let q = self.shifted(p);
        [1.0, q.x, q.y]
    }

    /// Converts local P1 coefficients of an expansion anchored at `anchor`
    /// with length `scale` into coefficients of `{1, x', y'}`.
    pub fn globalize(&self, local: [f64; 3], anchor: Point, scale: f64) -> [f64; 3] {
        let c = self.shifted(anchor);
        let g1 = local[1] / scale;
        let g2 = local[2] / scale;
        [local[0] - g1 * c.x - g2 * c.y, g1, g2]
    }

    /// Value of a VectorP1 expansion at `p`.
    pub fn eval_vector(&self, c: &VecP1, p: Point) -> Point {
        let phi = self.p1(p);
        let comp = |k: usize| (0..3).map(|r| c[k * 3 + r] * phi[r]).sum::<f64>();
        Point::new(comp(0), comp(1))
    }

    /// Exact VectorP1 expansion of the linear field `u(x) = u0 + J (x − x0)`
    /// given its value `u0` at `x0` and Jacobian rows.
    pub fn expand_linear(&self, x0: Point, u0: Point, jac: [[f64; 2]; 2]) -> VecP1 {
        let c = self.shifted(x0);
        let mut out = [0.0; VP1_DIM];
        for k in 0..2 {
            let val = u0.component(k);
            out[k * 3] = val - jac[k][0] * c.x - jac[k][1] * c.y;
            out[k * 3 + 1] = jac[k][0];
            out[k * 3 + 2] = jac[k][1];
        }
        out
    }
}

/// Coefficients of one GMLS fit in the local basis.
#[derive(Clone, Debug, PartialEq)]
pub struct GmlsCoefficients {
    pub anchor: Point,
    pub basis: PolyBasis,
    pub coeffs: Vec<f64>,
    pub neighbor_count: usize,
}

/// Weighted least-squares fit `argmin Σ_j w_j (Σ_r c_r φ_r(x_j) − u_j)²`.
pub fn solve_gmls(
    samples: &[f64],
    kind: BasisKind,
    kernel: &Kernel,
    anchor: Point,
    neighbor_points: &[Point],
) -> Result<GmlsCoefficients> {
    assert_eq!(samples.len(), neighbor_points.len());
    let basis = PolyBasis::new(kind, anchor, kernel.radius);
    let fit =
        WeightedFit::new(kind, kernel, anchor, neighbor_points).ok_or(MmdError::Unisolvency {
            point: usize::MAX,
            basis: kind.name(),
            neighbors: neighbor_points.len(),
        })?;
    let coeffs = fit.apply(samples);
    Ok(GmlsCoefficients {
        anchor,
        basis,
        coeffs,
        neighbor_count: neighbor_points.len(),
    })
}

/// Factorized `W^{1/2} B` for one neighborhood. The scalar factor is shared by
/// both components of VectorP1 fits.
struct WeightedFit {
    /// `dim × m` map from samples to local coefficients.
    map: Vec<Vec<f64>>,
}

impl WeightedFit {
    fn new(kind: BasisKind, kernel: &Kernel, anchor: Point, pts: &[Point]) -> Option<Self> {
        let scalar = match kind {
            BasisKind::ScalarP2 => BasisKind::ScalarP2,
            _ => BasisKind::ScalarP1,
        };
        let basis = PolyBasis::new(scalar, anchor, kernel.radius);
        let n = scalar.dim();
        let m = pts.len();
        if m < n {
            return None;
        }
        let sqrt_w: Vec<f64> = pts
            .iter()
            .map(|&p| kernel.eval(p.dist(anchor)).sqrt())
            .collect();
        let mut a = vec![0.0; m * n];
        for (j, &p) in pts.iter().enumerate() {
            for (r, v) in basis.eval(p).into_iter().enumerate() {
                a[r * m + j] = sqrt_w[j] * v;
            }
        }
        let qr = PivotedQr::new(m, n, a);
        if !qr.is_full_rank(RANK_TOL) {
            return None;
        }
        let mut map = qr.pseudo_inverse();
        for row in &mut map {
            row.iter_mut().zip(&sqrt_w).for_each(|(v, w)| *v *= w);
        }
        Some(Self { map })
    }

    fn apply(&self, samples: &[f64]) -> Vec<f64> {
        self.map
            .iter()
            .map(|row| row.iter().zip(samples).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Linear map from neighbor samples to coefficients in the global basis.
#[derive(Clone, Debug, PartialEq)]
pub struct Stencil {
    pub anchor: Point,
    pub neighbors: Vec<usize>,
    /// `rows[r][j]`: weight of sample `neighbors[j]` in coefficient `r`.
    pub rows: Vec<Vec<f64>>,
}

impl Stencil {
    /// Coefficients of a scalar field given on the whole cloud.
    pub fn apply(&self, field: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&self.neighbors)
                    .map(|(w, &j)| w * field[j])
                    .sum()
            })
            .collect()
    }

    /// VectorP1 coefficients of a vector field, one scalar P1 fit per
    /// component.
    pub fn apply_vector(&self, field: &[Point]) -> VecP1 {
        debug_assert_eq!(self.rows.len(), P1_DIM);
        let mut out = [0.0; VP1_DIM];
        for r in 0..3 {
            for (w, &j) in self.rows[r].iter().zip(&self.neighbors) {
                out[r] += w * field[j].x;
                out[3 + r] += w * field[j].y;
            }
        }
        out
    }
}

/// Global-basis P1 stencil anchored at `anchor` over the given neighborhood.
pub fn p1_stencil(
    points: &[Point],
    anchor: Point,
    neighbors: Vec<usize>,
    kernel: &Kernel,
    frame: &Frame,
) -> Option<Stencil> {
    let pts: Vec<Point> = neighbors.iter().map(|&j| points[j]).collect();
    let fit = WeightedFit::new(BasisKind::ScalarP1, kernel, anchor, &pts)?;
    let m = neighbors.len();
    let mut rows = vec![vec![0.0; m]; 3];
    for j in 0..m {
        let g = frame.globalize(
            [fit.map[0][j], fit.map[1][j], fit.map[2][j]],
            anchor,
            kernel.radius,
        );
        for r in 0..3 {
            rows[r][j] = g[r];
        }
    }
    Some(Stencil {
        anchor,
        neighbors,
        rows,
    })
}

/// Stencil mapping samples to the VectorP1 global coefficients of the gradient
/// of the local P2 fit (6 rows).
pub fn p2_gradient_stencil(
    points: &[Point],
    anchor: Point,
    neighbors: Vec<usize>,
    kernel: &Kernel,
    frame: &Frame,
) -> Option<Stencil> {
    let pts: Vec<Point> = neighbors.iter().map(|&j| points[j]).collect();
    let fit = WeightedFit::new(BasisKind::ScalarP2, kernel, anchor, &pts)?;
    let s = kernel.radius;
    let m = neighbors.len();
    let mut rows = vec![vec![0.0; m]; VP1_DIM];
    for j in 0..m {
        let a = |r: usize| fit.map[r][j];
        // ∂_x of a0 + a1 X + a2 Y + a3 X² + a4 XY + a5 Y² with X = (x − c)/s
        let gx = [a(1) / s, 2.0 * a(3) / s, a(4) / s];
        let gy = [a(2) / s, a(4) / s, 2.0 * a(5) / s];
        let gx = frame.globalize(gx, anchor, s);
        let gy = frame.globalize(gy, anchor, s);
        for r in 0..3 {
            rows[r][j] = gx[r];
            rows[3 + r][j] = gy[r];
        }
    }
    Some(Stencil {
        anchor,
        neighbors,
        rows,
    })
}

/// `{i} ∪ adjacency[i]`, with `i` first.
pub fn closed_neighborhood(graph: &CloudGraph, i: usize) -> Vec<usize> {
    let mut nb = Vec::with_capacity(graph.adjacency[i].len() + 1);
    nb.push(i);
    nb.extend_from_slice(&graph.adjacency[i]);
    nb
}

/// Per-point stencils anchored at the cloud points over their graph
/// neighborhoods.
pub fn nodal_p1_stencils(
    points: &[Point],
    graph: &CloudGraph,
    kernel: &Kernel,
    frame: &Frame,
) -> Result<Vec<Stencil>> {
    (0..points.len())
        .into_par_iter()
        .map(|i| {
            let nb = closed_neighborhood(graph, i);
            let count = nb.len();
            p1_stencil(points, points[i], nb, kernel, frame).ok_or(MmdError::Unisolvency {
                point: i,
                basis: BasisKind::ScalarP1.name(),
                neighbors: count,
            })
        })
        .collect()
}

pub fn nodal_p2_gradient_stencils(
    points: &[Point],
    graph: &CloudGraph,
    kernel: &Kernel,
    frame: &Frame,
) -> Result<Vec<Stencil>> {
    (0..points.len())
        .into_par_iter()
        .map(|i| {
            let nb = closed_neighborhood(graph, i);
            let count = nb.len();
            p2_gradient_stencil(points, points[i], nb, kernel, frame).ok_or(MmdError::Unisolvency {
                point: i,
                basis: BasisKind::ScalarP2.name(),
                neighbors: count,
            })
        })
        .collect()
}

/// Stencils restricted to `{i}` and the points strictly upwind of `x_i`.
/// Returns the stencils and the points that fell back to the full
/// neighborhood because the upwind set was not unisolvent.
pub fn upwind_p1_stencils(
    points: &[Point],
    graph: &CloudGraph,
    kernel: &Kernel,
    frame: &Frame,
    velocity: &[Point],
) -> Result<(Vec<Stencil>, Vec<usize>)> {
    let results: Vec<(Stencil, bool)> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let a = velocity[i];
            let mut up = vec![i];
            up.extend(
                graph.adjacency[i]
                    .iter()
                    .copied()
                    .filter(|&k| a.dot(points[k] - points[i]) < 0.0),
            );
            if let Some(s) = p1_stencil(points, points[i], up, kernel, frame) {
                return Ok((s, false));
            }
            let nb = closed_neighborhood(graph, i);
            let count = nb.len();
            p1_stencil(points, points[i], nb, kernel, frame)
                .map(|s| (s, true))
                .ok_or(MmdError::Unisolvency {
                    point: i,
                    basis: BasisKind::ScalarP1.name(),
                    neighbors: count,
                })
        })
        .collect::<Result<_>>()?;
    let fallbacks: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, r)| r.1)
        .map(|(i, _)| i)
        .collect();
    for &i in &fallbacks {
        log::debug!("upwind set of point {i} is not unisolvent; using the full neighborhood");
    }
    Ok((results.into_iter().map(|r| r.0).collect(), fallbacks))
}

/// Cloud points within the kernel support of `anchor`.
pub fn support_neighbors(
    grid: &SpatialGrid,
    points: &[Point],
    anchor: Point,
    radius: f64,
) -> Vec<usize> {
    let mut out = Vec::new();
    grid.for_each_candidate(anchor, radius, |j| {
        if points[j].dist(anchor) < radius {
            out.push(j);
        }
    });
    out.sort_unstable();
    out
}

/// VectorP1 coefficients `c_i` of a nodal vector field.
pub fn nodal_vector_coefficients(stencils: &[Stencil], field: &[Point]) -> Vec<VecP1> {
    stencils.par_iter().map(|s| s.apply_vector(field)).collect()
}

/// `c_ij = θ_ij c_i + (1 − θ_ij) c_j` per edge `(i, j)`, `i < j`.
pub fn blend_to_faces(
    nodal: &[VecP1],
    graph: &CloudGraph,
    theta: impl Fn(usize) -> f64 + Sync,
) -> Vec<VecP1> {
    graph
        .edges
        .par_iter()
        .enumerate()
        .map(|(e, &(i, j))| {
            let t = theta(e);
            let mut c = [0.0; VP1_DIM];
            for s in 0..VP1_DIM {
                c[s] = t * nodal[i][s] + (1.0 - t) * nodal[j][s];
            }
            c
        })
        .collect()
}

/// Upwind blend: the coefficients of the endpoint the flow leaves from,
/// decided by the sign of `a(x_ij)·(x_j − x_i)`.
pub fn upwind_theta(
    points: &[Point],
    graph: &CloudGraph,
    velocity_at: impl Fn(Point) -> Point,
) -> Vec<f64> {
    graph
        .edges
        .iter()
        .map(|&(i, j)| {
            let mid = points[i].midpoint(points[j]);
            if velocity_at(mid).dot(points[j] - points[i]) >= 0.0 {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{build_graph, generate_cloud, PerturbationMode};
    use crate::geometry::segment_boundary;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn generic_points(c: Point, h: f64, n: usize) -> Vec<Point> {
        (0..n)
            .map(|k| {
                let t = k as f64 * 2.399963;
                let r = h * (0.15 + 0.8 * ((k as f64 + 0.5) / n as f64).sqrt());
                Point::new(c.x + r * t.cos(), c.y + r * t.sin())
            })
            .collect()
    }

    #[test]
    fn kernel_shape() {
        let k = Kernel::new(2.0);
        assert_eq!(k.eval(0.0), 1.0);
        assert_eq!(k.eval(2.0), 0.0);
        assert_eq!(k.eval(3.0), 0.0);
        assert_relative_eq!(k.eval(1.0), 0.0625);
        let mut last = 1.0;
        for i in 1..=100 {
            let v = k.eval(i as f64 * 0.02);
            assert!(v <= last);
            last = v;
        }
        // first and second one-sided derivatives vanish at the support edge
        let e = 1e-4;
        assert!(k.eval(2.0 - e) < 1e-12);
    }

    #[test]
    fn basis_at_center() {
        let c = Point::new(0.3, 0.7);
        assert_eq!(
            PolyBasis::new(BasisKind::ScalarP2, c, 0.1).eval(c),
            vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
        let v = PolyBasis::new(BasisKind::VectorP1, c, 0.1).eval(c);
        // x-components: e_1 block, y-components: e_2 block
        assert_eq!(&v[..6], &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(&v[6..], &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn constant_and_linear_reproduction() {
        let c = Point::new(0.5, 0.5);
        let pts = generic_points(c, 0.2, 6);
        let k = Kernel::new(0.25);
        let ones = vec![1.0; 6];
        let fit = solve_gmls(&ones, BasisKind::ScalarP1, &k, c, &pts).unwrap();
        assert_relative_eq!(fit.coeffs[0], 1.0, epsilon = 1e-12);
        assert!(fit.coeffs[1].abs() < 1e-12 && fit.coeffs[2].abs() < 1e-12);
        let lin: Vec<f64> = pts.iter().map(|p| 3.0 * p.x + 2.0 * p.y).collect();
        let fit = solve_gmls(&lin, BasisKind::ScalarP1, &k, c, &pts).unwrap();
        assert_relative_eq!(fit.coeffs[1] / k.radius, 3.0, epsilon = 1e-10);
        assert_relative_eq!(fit.coeffs[2] / k.radius, 2.0, epsilon = 1e-10);
    }

    #[test]
    fn quadratic_gradient_reproduction() {
        let c = Point::new(0.37, 0.61);
        let pts = generic_points(c, 0.1, 9);
        let k = Kernel::new(0.12);
        let frame = Frame {
            origin: Point::new(-0.1, -0.1),
        };
        let nb: Vec<usize> = (0..pts.len()).collect();
        let st = p2_gradient_stencil(&pts, c, nb, &k, &frame).unwrap();
        let u: Vec<f64> = pts.iter().map(|p| p.x * p.x).collect();
        let g: VecP1 = st.apply(&u).try_into().unwrap();
        let at = frame.eval_vector(&g, c);
        assert_relative_eq!(at.x, 2.0 * c.x, epsilon = 1e-10);
        assert!(at.y.abs() < 1e-10);
        // the gradient expansion is exact everywhere: ∇(x²) = (2x, 0)
        let q = Point::new(0.9, 0.2);
        assert_relative_eq!(frame.eval_vector(&g, q).x, 1.8, epsilon = 1e-9);
    }

    #[test]
    fn unisolvency_failure_on_collinear_points() {
        let pts: Vec<Point> = (0..8).map(|k| Point::new(k as f64 * 0.1, 0.5)).collect();
        let u = vec![0.0; 8];
        let err = solve_gmls(
            &u,
            BasisKind::ScalarP1,
            &Kernel::new(1.0),
            Point::new(0.3, 0.5),
            &pts,
        );
        assert!(matches!(err, Err(MmdError::Unisolvency { .. })));
    }

    #[test]
    fn qr_fit_matches_normal_equations() {
        let c = Point::new(0.2, 0.4);
        let pts = generic_points(c, 0.05, 15);
        let k = Kernel::new(0.06);
        let u: Vec<f64> = pts.iter().map(|p| (3.0 * p.x).sin() + p.y * p.y).collect();
        let fit = solve_gmls(&u, BasisKind::ScalarP2, &k, c, &pts).unwrap();
        let basis = PolyBasis::new(BasisKind::ScalarP2, c, k.radius);
        let b = DMatrix::from_fn(15, 6, |j, r| basis.eval(pts[j])[r]);
        let w = DMatrix::from_diagonal(&DVector::from_iterator(
            15,
            pts.iter().map(|p| k.eval(p.dist(c))),
        ));
        let lhs = b.transpose() * &w * &b;
        let rhs = b.transpose() * &w * DVector::from_vec(u);
        let oracle = lhs.lu().solve(&rhs).unwrap();
        for r in 0..6 {
            assert_relative_eq!(
                fit.coeffs[r],
                oracle[r],
                epsilon = 1e-8,
                max_relative = 1e-8
            );
        }
    }

    fn test_cloud(n: usize) -> (Vec<Point>, CloudGraph, Kernel, Frame) {
        let d = Domain::unit_square();
        let h = 1.0 / n as f64;
        let segs = segment_boundary(&d, h).unwrap();
        let c = generate_cloud(&d, &segs, h, 0.2, PerturbationMode::Componentwise, 11).unwrap();
        let g = build_graph(&c.points, 2.5 * h).unwrap();
        (c.points, g, Kernel::new(2.5 * h), Frame::for_domain(&d))
    }

    #[test]
    fn nodal_vector_reproduces_linear_fields() {
        let (pts, g, k, frame) = test_cloud(12);
        let st = nodal_p1_stencils(&pts, &g, &k, &frame).unwrap();
        let fields: [(fn(Point) -> Point, [[f64; 2]; 2]); 2] = [
            (|p: Point| p, [[1.0, 0.0], [0.0, 1.0]]),
            (|p: Point| Point::new(p.y, -p.x), [[0.0, 1.0], [-1.0, 0.0]]),
        ];
        for (field, jac) in fields {
            let u: Vec<Point> = pts.iter().map(|&p| field(p)).collect();
            let c = nodal_vector_coefficients(&st, &u);
            let exact = frame.expand_linear(Point::default(), field(Point::default()), jac);
            for ci in &c {
                for s in 0..VP1_DIM {
                    assert!((ci[s] - exact[s]).abs() < 1e-10, "{ci:?} vs {exact:?}");
                }
            }
            // blending with any θ keeps the exact expansion
            let faces = blend_to_faces(&c, &g, |e| (e % 5) as f64 / 4.0);
            for cf in &faces {
                for s in 0..VP1_DIM {
                    assert!((cf[s] - exact[s]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn nodal_quadratic_matches_dense_oracle() {
        let (pts, g, k, frame) = test_cloud(10);
        let st = nodal_p1_stencils(&pts, &g, &k, &frame).unwrap();
        let u: Vec<Point> = pts.iter().map(|p| Point::new(p.x * p.x, 0.0)).collect();
        let c = nodal_vector_coefficients(&st, &u);
        for i in [0usize, 17, 40, pts.len() - 1] {
            let nb = closed_neighborhood(&g, i);
            // weighted LS directly in global shifted coordinates
            let m = nb.len();
            let b = DMatrix::from_fn(m, 3, |j, r| frame.p1(pts[nb[j]])[r]);
            let w = DMatrix::from_diagonal(&DVector::from_iterator(
                m,
                nb.iter().map(|&j| k.eval(pts[j].dist(pts[i]))),
            ));
            let f = DVector::from_iterator(m, nb.iter().map(|&j| u[j].x));
            let oracle = (b.transpose() * &w * &b)
                .lu()
                .solve(&(b.transpose() * &w * f))
                .unwrap();
            for r in 0..3 {
                assert_relative_eq!(c[i][r], oracle[r], epsilon = 1e-8, max_relative = 1e-8);
            }
            // tangent expansion at x_i up to O(h²)
            let tangent = frame.expand_linear(
                pts[i],
                Point::new(pts[i].x.powi(2), 0.0),
                [[2.0 * pts[i].x, 0.0], [0.0, 0.0]],
            );
            let approx_val = frame.eval_vector(&c[i], pts[i]).x;
            assert!((approx_val - frame.eval_vector(&tangent, pts[i]).x).abs() < 0.05 * k.radius);
        }
    }

    #[test]
    fn upwind_sets() {
        let (pts, g, k, frame) = test_cloud(12);
        let zero = vec![Point::default(); pts.len()];
        let (_, fb) = upwind_p1_stencils(&pts, &g, &k, &frame, &zero).unwrap();
        assert_eq!(fb.len(), pts.len());
        let a = vec![Point::new(1.0, 0.0); pts.len()];
        let (st, fb) = upwind_p1_stencils(&pts, &g, &k, &frame, &a).unwrap();
        let i = 40;
        if !fb.contains(&i) {
            assert_eq!(st[i].neighbors[0], i);
            assert!(st[i].neighbors[1..].iter().all(|&j| pts[j].x < pts[i].x));
        }
        let u: Vec<Point> = pts
            .iter()
            .map(|p| Point::new(2.0 * p.x - p.y, 0.5 + p.y))
            .collect();
        let c = nodal_vector_coefficients(&st, &u);
        let exact = frame.expand_linear(
            Point::default(),
            Point::new(0.0, 0.5),
            [[2.0, -1.0], [0.0, 1.0]],
        );
        for ci in &c {
            for s in 0..VP1_DIM {
                assert!((ci[s] - exact[s]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn upwind_theta_is_consistent() {
        let (pts, g, _, _) = test_cloud(8);
        let theta = upwind_theta(&pts, &g, |_| Point::new(1.0, 2.0));
        for (e, &(i, j)) in g.edges.iter().enumerate() {
            let d = pts[j] - pts[i];
            assert_eq!(theta[e], if d.x + 2.0 * d.y >= 0.0 { 1.0 } else { 0.0 });
        }
    }
}
