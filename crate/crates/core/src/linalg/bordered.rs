//! Lagrange-multiplier solves `[[A, w], [wᵀ, 0]] [x; λ] = [b; 0]` for singular
//! `A` whose nullspace is spanned by the constant vector.

use nalgebra::{DMatrix, DVector};

use super::krylov::{bicgstab, minres, Jacobi, KrylovOptions, LinearOperator, SolveReport};
use super::CsrMatrix;
use crate::error::{MmdError, Result};

/// Systems up to this size use a dense LU factorization.
pub const DENSE_LIMIT: usize = 2000;

fn check_weights(w: &[f64]) -> Result<f64> {
    let sum: f64 = w.iter().sum();
    let scale: f64 = w.iter().map(|v| v.abs()).sum();
    if !(sum.abs() > 1e-14 * scale) {
        return Err(MmdError::Singular(
            "constraint weights are orthogonal to the constant nullspace".into(),
        ));
    }
    Ok(sum)
}

struct Saddle<'a> {
    a: &'a CsrMatrix,
    w: &'a [f64],
}

impl LinearOperator for Saddle<'_> {
    fn dim(&self) -> usize {
        self.a.n_rows + 1
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.a.n_rows;
        self.a.mul_vec_into(&x[..n], &mut y[..n]);
        let lambda = x[n];
        for i in 0..n {
            y[i] += self.w[i] * lambda;
        }
        y[n] = self.w.iter().zip(&x[..n]).map(|(w, x)| w * x).sum();
    }
}

/// Symmetric bordered solve: dense LU for small systems, MINRES otherwise.
/// Returns `(x, λ)` with `wᵀx = 0`.
pub fn bordered_solve(a: &CsrMatrix, b: &[f64], w: &[f64], tol: f64) -> Result<(Vec<f64>, f64)> {
    let n = a.n_rows;
    assert_eq!(b.len(), n);
    assert_eq!(w.len(), n);
    check_weights(w)?;
    if n <= DENSE_LIMIT {
        let mut m = DMatrix::zeros(n + 1, n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(&a.to_dense());
        for i in 0..n {
            m[(i, n)] = w[i];
            m[(n, i)] = w[i];
        }
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from_slice(b);
        let sol = m
            .lu()
            .solve(&rhs)
            .ok_or_else(|| MmdError::Singular("bordered system is singular".into()))?;
        let x = sol.rows(0, n).iter().copied().collect();
        return Ok((x, sol[n]));
    }
    let op = Saddle { a, w };
    let mut rhs = b.to_vec();
    rhs.push(0.0);
    let (sol, report) = minres(&op, &rhs, &KrylovOptions::new(tol, 20 * (n + 1)));
    report.into_result()?;
    let lambda = sol[n];
    Ok((sol[..n].to_vec(), lambda))
}

/// `A + 1 wᵀ`, nonsingular when constants span both null spaces of `A`.
struct RankOneShift<'a> {
    a: &'a CsrMatrix,
    w: &'a [f64],
}

impl LinearOperator for RankOneShift<'_> {
    fn dim(&self) -> usize {
        self.a.n_rows
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.a.mul_vec_into(x, y);
        let s: f64 = self.w.iter().zip(x).map(|(w, x)| w * x).sum();
        y.iter_mut().for_each(|y| *y += s);
    }
}

/// Bordered solve for nonsymmetric `A` with left and right null vector `1`.
/// The multiplier follows from `1ᵀ`: `λ = 1ᵀb / 1ᵀw`; then
/// `(A + 1wᵀ) x = b − wλ` is solved by Jacobi-preconditioned BiCGStab.
pub fn bordered_solve_nonsymmetric(
    a: &CsrMatrix,
    b: &[f64],
    w: &[f64],
    opts: &KrylovOptions,
) -> Result<(Vec<f64>, f64, SolveReport)> {
    let n = a.n_rows;
    assert_eq!(b.len(), n);
    assert_eq!(w.len(), n);
    let wsum = check_weights(w)?;
    let lambda = b.iter().sum::<f64>() / wsum;
    let rhs: Vec<f64> = b.iter().zip(w).map(|(b, w)| b - w * lambda).collect();
    let diag: Vec<f64> = a.diagonal().iter().zip(w).map(|(d, w)| d + w).collect();
    let op = RankOneShift { a, w };
    let (x, report) = bicgstab(&op, &rhs, opts, &Jacobi::new(&diag));
    Ok((x, lambda, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::krylov::{pcg, Identity};
    use crate::linalg::sparse::{graph_laplacian, TripletBuilder};
    use approx::assert_relative_eq;

    fn path(n: usize) -> CsrMatrix {
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        graph_laplacian(n, &edges, &vec![1.0; n - 1])
    }

    #[test]
    fn agrees_with_deflated_cg() {
        let a = path(3);
        let b = [1.0, 0.0, -1.0];
        let (x, lambda) = bordered_solve(&a, &b, &[1.0; 3], 1e-12).unwrap();
        let (y, _) = pcg(&a, &b, &KrylovOptions::new(1e-12, 10).deflated(), &Identity).unwrap();
        assert_relative_eq!(lambda, 0.0, epsilon = 1e-14);
        for k in 0..3 {
            assert_relative_eq!(x[k], y[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let (x, lambda) = bordered_solve(&path(4), &[0.0; 4], &[1.0; 4], 1e-12).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
        assert_eq!(lambda, 0.0);
    }

    #[test]
    fn constraint_holds_for_both_paths() {
        let w: Vec<f64> = (0..2500).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect();
        let lattice = {
            let m = 50;
            let mut edges = Vec::new();
            for k in 0..m * m {
                if k % m + 1 < m {
                    edges.push((k, k + 1));
                }
                if k + m < m * m {
                    edges.push((k, k + m));
                }
            }
            graph_laplacian(m * m, &edges, &vec![1.0; edges.len()])
        };
        for n in [50, 2500] {
            let a = if n == 50 { path(n) } else { lattice.clone() };
            let mut b: Vec<f64> = (0..n).map(|i| ((i * 13) % 29) as f64).collect();
            let mean = b.iter().sum::<f64>() / n as f64;
            b.iter_mut().for_each(|v| *v -= mean);
            let (x, _) = bordered_solve(&a, &b, &w[..n], 1e-12).unwrap();
            let c: f64 = x.iter().zip(&w).map(|(x, w)| x * w).sum();
            let scale: f64 = x.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            assert!(c.abs() <= 1e-10 * scale, "n = {n}: {c}");
        }
    }

    #[test]
    fn orthogonal_weights_are_rejected() {
        assert!(matches!(
            bordered_solve(&path(2), &[1.0, -1.0], &[1.0, -1.0], 1e-12),
            Err(MmdError::Singular(_))
        ));
    }

    #[test]
    fn nonsymmetric_bordered_matches_dense() {
        // cyclic Laplacian plus a skew circulant: constants span both null spaces
        let n = 30;
        let mut t = TripletBuilder::new(n, n);
        for i in 0..n {
            let j = (i + 1) % n;
            t.add(i, i, 1.0);
            t.add(j, j, 1.0);
            t.add(i, j, -1.0 + 0.3);
            t.add(j, i, -1.0 - 0.3);
        }
        let a = t.build();
        for s in a.transpose().row_sums().into_iter().chain(a.row_sums()) {
            assert!(s.abs() < 1e-14);
        }
        let w: Vec<f64> = (0..n).map(|i| 1.0 + 0.02 * i as f64).collect();
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.4).sin()).collect();
        let (x, lambda, rep) =
            bordered_solve_nonsymmetric(&a, &b, &w, &KrylovOptions::new(1e-12, 500)).unwrap();
        assert!(rep.converged, "{rep:?}");
        let (xd, ld) = bordered_solve(&a, &b, &w, 1e-12).unwrap();
        assert_relative_eq!(lambda, ld, epsilon = 1e-10);
        for k in 0..n {
            assert_relative_eq!(x[k], xd[k], epsilon = 1e-8);
        }
    }
}
