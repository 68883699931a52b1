//! Smoothed-aggregation algebraic multigrid V-cycle for symmetric M-matrices
//! such as weighted graph Laplacians.

use nalgebra::{Cholesky, DVector, Dyn};

use super::krylov::Preconditioner;
use super::sparse::{CsrMatrix, MatrixTags, TripletBuilder};

#[derive(Clone, Copy, Debug)]
pub struct AmgConfig {
    /// `−a_ij ≥ θ max_k(−a_ik)` in row `i` or row `j` marks a strong connection.
    pub strength_threshold: f64,
    /// Coarsen until at most this many unknowns remain.
    pub max_coarse: usize,
    pub max_levels: usize,
    /// Smooth the tentative prolongator with one damped-Jacobi step.
    pub smooth_prolongator: bool,
}

impl Default for AmgConfig {
    fn default() -> Self {
        Self {
            strength_threshold: 0.25,
            max_coarse: 64,
            max_levels: 25,
            smooth_prolongator: true,
        }
    }
}

struct Level {
    a: CsrMatrix,
    /// Prolongator from the next coarser level; its transpose restricts.
    p: CsrMatrix,
    r: CsrMatrix,
    inv_diag: Vec<f64>,
    omega: f64,
}

enum CoarseSolve {
    /// Cholesky factor of `A_c + s 11ᵀ` when `A_c` has constant nullspace.
    Dense {
        chol: Cholesky<f64, Dyn>,
        singular: bool,
    },
    /// Too large to factor after coarsening stalled: smooth only.
    Smooth {
        inv_diag: Vec<f64>,
        omega: f64,
        a: Box<CsrMatrix>,
    },
}

pub struct AmgPreconditioner {
    levels: Vec<Level>,
    coarse: CoarseSolve,
    sizes: Vec<usize>,
    nnz: Vec<usize>,
}

/// Gershgorin bound on the spectral radius of `D⁻¹A`.
fn jacobi_spectral_bound(a: &CsrMatrix) -> f64 {
    (0..a.n_rows)
        .map(|i| {
            let (_, vals) = a.row(i);
            let d = a.get(i, i);
            if d > 0.0 {
                vals.iter().map(|v| v.abs()).sum::<f64>() / d
            } else {
                1.0
            }
        })
        .fold(0.0, f64::max)
        .max(1e-300)
}

fn inverse_diagonal(a: &CsrMatrix) -> Vec<f64> {
    a.diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 })
        .collect()
}

/// Greedy three-pass aggregation on the strength graph. Returns the aggregate
/// id of every node and the aggregate count.
fn aggregate(a: &CsrMatrix, theta: f64) -> (Vec<usize>, usize) {
    let n = a.n_rows;
    let row_max: Vec<f64> = (0..n)
        .map(|i| {
            let (cols, vals) = a.row(i);
            cols.iter()
                .zip(vals)
                .filter(|&(&j, _)| j != i)
                .fold(0.0_f64, |m, (_, &v)| m.max(-v))
        })
        .collect();
    let strong: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            let (cols, vals) = a.row(i);
            cols.iter()
                .zip(vals)
                .filter(|&(&j, &v)| {
                    j != i && v < 0.0 && (-v >= theta * row_max[i] || -v >= theta * row_max[j])
                })
                .map(|(&j, &v)| (j, -v))
                .collect()
        })
        .collect();
    const NONE: usize = usize::MAX;
    let mut agg = vec![NONE; n];
    let mut count = 0;
    for i in 0..n {
        if agg[i] != NONE || strong[i].is_empty() || strong[i].iter().any(|&(j, _)| agg[j] != NONE)
        {
            continue;
        }
        agg[i] = count;
        for &(j, _) in &strong[i] {
            agg[j] = count;
        }
        count += 1;
    }
    let first_pass = agg.clone();
    for i in 0..n {
        if agg[i] != NONE {
            continue;
        }
        let best = strong[i]
            .iter()
            .filter(|&&(j, _)| first_pass[j] != NONE)
            .max_by(|a, b| a.1.total_cmp(&b.1));
        if let Some(&(j, _)) = best {
            agg[i] = first_pass[j];
        }
    }
    for i in 0..n {
        if agg[i] != NONE {
            continue;
        }
        agg[i] = count;
        for &(j, _) in &strong[i] {
            if agg[j] == NONE {
                agg[j] = count;
            }
        }
        count += 1;
    }
    (agg, count)
}

fn is_laplacian_like(a: &CsrMatrix) -> bool {
    let scale = a.max_abs();
    a.row_sums().iter().all(|s| s.abs() <= 1e-8 * scale)
}

impl AmgPreconditioner {
    pub fn new(a: &CsrMatrix, config: AmgConfig) -> Self {
        let mut levels = Vec::new();
        let mut current = a.clone();
        let mut sizes = vec![current.n_rows];
        let mut nnz = vec![current.nnz()];
        while current.n_rows > config.max_coarse && levels.len() + 1 < config.max_levels {
            let (agg, nc) = aggregate(&current, config.strength_threshold);
            if nc as f64 > 0.9 * current.n_rows as f64 || nc == 0 {
                break;
            }
            let n = current.n_rows;
            let mut tb = TripletBuilder::new(n, nc);
            for (i, &g) in agg.iter().enumerate() {
                tb.add(i, g, 1.0);
            }
            let tentative = tb.build();
            let inv_diag = inverse_diagonal(&current);
            let rho = jacobi_spectral_bound(&current);
            let omega = 4.0 / (3.0 * rho);
            let p = if config.smooth_prolongator {
                let ap = current.matmul(&tentative);
                let mut sb = TripletBuilder::new(n, nc);
                for i in 0..n {
                    sb.add(i, agg[i], 1.0);
                    let (cols, vals) = ap.row(i);
                    for (&j, &v) in cols.iter().zip(vals) {
                        sb.add(i, j, -omega * inv_diag[i] * v);
                    }
                }
                sb.build()
            } else {
                tentative
            };
            let r = p.transpose();
            let mut coarse = r.matmul(&current.matmul(&p));
            coarse.tags = MatrixTags {
                symmetric: true,
                ..current.tags
            };
            sizes.push(coarse.n_rows);
            nnz.push(coarse.nnz());
            let fine = std::mem::replace(&mut current, coarse);
            levels.push(Level {
                a: fine,
                p,
                r,
                inv_diag,
                omega,
            });
        }
        let coarse = if current.n_rows <= config.max_coarse.max(600) {
            let singular = is_laplacian_like(&current);
            let mut dense = current.to_dense();
            // symmetrize roundoff from the Galerkin product
            dense = 0.5 * (&dense + dense.transpose());
            if singular {
                let s = dense.diagonal().mean().max(f64::MIN_POSITIVE);
                dense.add_scalar_mut(s);
            }
            match Cholesky::new(dense) {
                Some(chol) => CoarseSolve::Dense { chol, singular },
                None => smoother_only(current),
            }
        } else {
            smoother_only(current)
        };
        Self {
            levels,
            coarse,
            sizes,
            nnz,
        }
    }

    pub fn level_sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Total stored nonzeros over the finest-level count.
    pub fn operator_complexity(&self) -> f64 {
        self.nnz.iter().sum::<usize>() as f64 / self.nnz[0].max(1) as f64
    }

    fn coarse_solve(&self, b: &[f64]) -> Vec<f64> {
        match &self.coarse {
            CoarseSolve::Dense { chol, singular } => {
                let mut rhs = DVector::from_column_slice(b);
                if *singular {
                    let mean = rhs.mean();
                    rhs.add_scalar_mut(-mean);
                }
                chol.solve(&rhs).as_slice().to_vec()
            }
            CoarseSolve::Smooth { inv_diag, omega, a } => {
                let mut x = vec![0.0; b.len()];
                jacobi_sweep(a, inv_diag, *omega, b, &mut x);
                jacobi_sweep(a, inv_diag, *omega, b, &mut x);
                x
            }
        }
    }

    fn cycle(&self, level: usize, b: &[f64]) -> Vec<f64> {
        let Some(lv) = self.levels.get(level) else {
            return self.coarse_solve(b);
        };
        let mut x = vec![0.0; b.len()];
        jacobi_sweep(&lv.a, &lv.inv_diag, lv.omega, b, &mut x);
        let ax = lv.a.mul_vec(&x);
        let res: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let rc = lv.r.mul_vec(&res);
        let xc = self.cycle(level + 1, &rc);
        let corr = lv.p.mul_vec(&xc);
        x.iter_mut().zip(&corr).for_each(|(x, c)| *x += c);
        jacobi_sweep(&lv.a, &lv.inv_diag, lv.omega, b, &mut x);
        x
    }
}

fn smoother_only(a: CsrMatrix) -> CoarseSolve {
    let omega = 4.0 / (3.0 * jacobi_spectral_bound(&a));
    CoarseSolve::Smooth {
        inv_diag: inverse_diagonal(&a),
        omega,
        a: Box::new(a),
    }
}

fn jacobi_sweep(a: &CsrMatrix, inv_diag: &[f64], omega: f64, b: &[f64], x: &mut [f64]) {
    let ax = a.mul_vec(x);
    for i in 0..x.len() {
        x[i] += omega * inv_diag[i] * (b[i] - ax[i]);
    }
}

impl Preconditioner for AmgPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(&self.cycle(0, r));
    }
}

/// Dense copy of the preconditioner, for tests.
#[cfg(test)]
fn as_dense(m: &AmgPreconditioner, n: usize) -> nalgebra::DMatrix<f64> {
    let mut d = nalgebra::DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut z = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        m.apply(&e, &mut z);
        for i in 0..n {
            d[(i, j)] = z[i];
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::krylov::{pcg, KrylovOptions};
    use crate::linalg::sparse::graph_laplacian;
    use crate::linalg::{dot, project_out_constant};

    fn lattice_laplacian(m: usize) -> CsrMatrix {
        let mut edges = Vec::new();
        for j in 0..m {
            for i in 0..m {
                let k = j * m + i;
                if i + 1 < m {
                    edges.push((k, k + 1));
                }
                if j + 1 < m {
                    edges.push((k, k + m));
                }
            }
        }
        let w = vec![1.0; edges.len()];
        graph_laplacian(m * m, &edges, &w)
    }

    fn rhs(n: usize) -> Vec<f64> {
        let mut b: Vec<f64> = (0..n)
            .map(|i| ((i * 7919) % 101) as f64 / 101.0 - 0.5)
            .collect();
        project_out_constant(&mut b);
        b
    }

    #[test]
    fn path_laplacian_converges_quickly() {
        let n = 256;
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        let a = graph_laplacian(n, &edges, &vec![1.0; n - 1]);
        let amg = AmgPreconditioner::new(&a, AmgConfig::default());
        let (_, rep) = pcg(
            &a,
            &rhs(n),
            &KrylovOptions::new(1e-10, 200).deflated(),
            &amg,
        )
        .unwrap();
        assert!(rep.converged);
        assert!(rep.iterations <= 30, "{} iterations", rep.iterations);
    }

    #[test]
    fn lattice_iterations_scale() {
        let mut counts = Vec::new();
        for m in [16, 32, 64] {
            let a = lattice_laplacian(m);
            let amg = AmgPreconditioner::new(&a, AmgConfig::default());
            let (x, rep) = pcg(
                &a,
                &rhs(m * m),
                &KrylovOptions::new(1e-10, 200).deflated(),
                &amg,
            )
            .unwrap();
            assert!(rep.converged);
            assert!(x.iter().sum::<f64>().abs() < 1e-12 * x.len() as f64);
            counts.push(rep.iterations);
        }
        assert!(counts[2] < 2 * counts[0], "{counts:?}");
    }

    #[test]
    fn preconditioner_is_symmetric() {
        let a = lattice_laplacian(12);
        let amg = AmgPreconditioner::new(
            &a,
            AmgConfig {
                max_coarse: 8,
                ..AmgConfig::default()
            },
        );
        assert!(amg.level_sizes().len() > 1);
        let n = a.n_rows;
        let x = rhs(n);
        let y: Vec<f64> = (0..n).map(|i| ((i * 31) % 17) as f64 - 8.0).collect();
        let mut mx = vec![0.0; n];
        let mut my = vec![0.0; n];
        amg.apply(&x, &mut mx);
        amg.apply(&y, &mut my);
        let lhs = dot(&mx, &y);
        let rhs = dot(&x, &my);
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        let d = as_dense(&amg, n);
        assert!((&d - d.transpose()).abs().max() < 1e-12);
    }

    #[test]
    fn nonsingular_m_matrix() {
        let mut a = lattice_laplacian(20);
        for i in 0..a.n_rows {
            let (s, e) = (a.row_ptr[i], a.row_ptr[i + 1]);
            for k in s..e {
                if a.col_idx[k] == i {
                    a.values[k] += 0.01;
                }
            }
        }
        let amg = AmgPreconditioner::new(&a, AmgConfig::default());
        let b: Vec<f64> = (0..a.n_rows).map(|i| (i % 3) as f64).collect();
        let (x, rep) = pcg(&a, &b, &KrylovOptions::new(1e-10, 200), &amg).unwrap();
        assert!(rep.converged);
        let r: Vec<f64> = a.mul_vec(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(dot(&r, &r).sqrt() <= 1e-9 * dot(&b, &b).sqrt());
    }

    #[test]
    fn no_strong_connections_degenerates_to_smoothing() {
        let a = CsrMatrix::identity(3000);
        let amg = AmgPreconditioner::new(&a, AmgConfig::default());
        assert_eq!(amg.level_sizes(), &[3000]);
        let b = vec![1.0; 3000];
        let (_, rep) = pcg(&a, &b, &KrylovOptions::new(1e-10, 50), &amg).unwrap();
        assert!(rep.converged);
    }
}
