//! Householder QR with column pivoting by column norm.

use crate::error::{MmdError, Result};

/// Relative pivot threshold below which a column is treated as dependent.
pub const RANK_TOL: f64 = 1e-10;

/// `A P = Q R` for an `m × n` matrix with `m ≥ n`.
#[derive(Clone, Debug)]
pub struct PivotedQr {
    m: usize,
    n: usize,
    /// Column-major, R in the upper triangle.
    r: Vec<f64>,
    reflectors: Vec<(Vec<f64>, f64)>,
    perm: Vec<usize>,
}

impl PivotedQr {
    /// Factorizes the column-major `m × n` array `a`.
    pub fn new(m: usize, n: usize, mut a: Vec<f64>) -> Self {
        assert_eq!(a.len(), m * n, "matrix storage does not match its shape");
        let mut perm: Vec<usize> = (0..n).collect();
        let mut reflectors = Vec::with_capacity(n.min(m));
        for k in 0..n.min(m) {
            let mut best = k;
            let mut best_norm = -1.0;
            for j in k..n {
                let s: f64 = a[j * m + k..(j + 1) * m].iter().map(|v| v * v).sum();
                if s > best_norm {
                    best_norm = s;
                    best = j;
                }
            }
            if best != k {
                for i in 0..m {
                    a.swap(k * m + i, best * m + i);
                }
                perm.swap(k, best);
            }
            let mut v = a[k * m + k..(k + 1) * m].to_vec();
            let x0 = v[0];
            let xnorm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
            let alpha = if x0 >= 0.0 { -xnorm } else { xnorm };
            v[0] -= alpha;
            let beta: f64 = v.iter().map(|t| t * t).sum();
            let tau = if beta > 0.0 { 2.0 / beta } else { 0.0 };
            for j in k + 1..n {
                let col = &mut a[j * m + k..(j + 1) * m];
                let s = tau * v.iter().zip(col.iter()).map(|(p, q)| p * q).sum::<f64>();
                col.iter_mut().zip(&v).for_each(|(c, vi)| *c -= s * vi);
            }
            a[k * m + k] = if beta > 0.0 { alpha } else { x0 };
            for i in k + 1..m {
                a[k * m + i] = 0.0;
            }
            reflectors.push((v, tau));
        }
        Self {
            m,
            n,
            r: a,
            reflectors,
            perm,
        }
    }

    /// Factorizes a row-major matrix given as rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        let mut a = vec![0.0; m * n];
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "ragged matrix rows");
            for (j, &v) in row.iter().enumerate() {
                a[j * m + i] = v;
            }
        }
        Self::new(m, n, a)
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn r_diag(&self, k: usize) -> f64 {
        self.r[k * self.m + k]
    }

    /// min_k |R_kk| / |R_00|; zero when the matrix has fewer rows than columns.
    pub fn min_pivot_ratio(&self) -> f64 {
        if self.m < self.n || self.n == 0 {
            return 0.0;
        }
        let r00 = self.r_diag(0).abs();
        if r00 == 0.0 {
            return 0.0;
        }
        (0..self.n)
            .map(|k| self.r_diag(k).abs() / r00)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_full_rank(&self, tol: f64) -> bool {
        self.min_pivot_ratio() > tol
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    fn apply_qt(&self, b: &mut [f64]) {
        for (k, (v, tau)) in self.reflectors.iter().enumerate() {
            let tail = &mut b[k..];
            let s = tau * v.iter().zip(tail.iter()).map(|(p, q)| p * q).sum::<f64>();
            tail.iter_mut().zip(v).for_each(|(t, vi)| *t -= s * vi);
        }
    }

    /// Least-squares solution of `A x ≈ b`; assumes full rank.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.m);
        let mut z = b.to_vec();
        self.apply_qt(&mut z);
        let n = self.n;
        let mut y = vec![0.0; n];
        for k in (0..n).rev() {
            let mut s = z[k];
            for j in k + 1..n {
                s -= self.r[j * self.m + k] * y[j];
            }
            y[k] = s / self.r_diag(k);
        }
        let mut x = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }

    /// The `n × m` left inverse `A⁺`, returned as `n` rows of length `m`, so
    /// that `solve(b) = A⁺ b`.
    pub fn pseudo_inverse(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.m]; self.n];
        let mut e = vec![0.0; self.m];
        for j in 0..self.m {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let x = self.solve(&e);
            for (row, xi) in out.iter_mut().zip(x) {
                row[j] = xi;
            }
        }
        out
    }
}

/// Minimizes `|M x − rhs|₂` for `M` given row-major, rejecting rank-deficient
/// systems.
pub fn dense_qr_least_squares(rows: &[Vec<f64>], rhs: &[f64]) -> Result<Vec<f64>> {
    let qr = PivotedQr::from_rows(rows);
    let ratio = qr.min_pivot_ratio();
    if ratio <= RANK_TOL {
        return Err(MmdError::RankDeficient { ratio });
    }
    Ok(qr.solve(rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn square_invertible_solve() {
        let rows = vec![
            vec![2.0, 1.0, 0.0],
            vec![1.0, 3.0, 1.0],
            vec![0.0, 1.0, 4.0],
        ];
        let x_true = [1.0, -2.0, 0.5];
        let b: Vec<f64> = rows
            .iter()
            .map(|r| r.iter().zip(&x_true).map(|(a, x)| a * x).sum())
            .collect();
        let x = dense_qr_least_squares(&rows, &b).unwrap();
        for (a, e) in x.iter().zip(&x_true) {
            assert_relative_eq!(*a, *e, epsilon = 1e-12);
        }
    }

    #[test]
    fn collinear_line_fit() {
        let ts = [0.0, 0.5, 1.0, 2.0, 3.5];
        let rows: Vec<Vec<f64>> = ts.iter().map(|&t| vec![1.0, t]).collect();
        let b: Vec<f64> = ts.iter().map(|t| 0.25 - 3.0 * t).collect();
        let x = dense_qr_least_squares(&rows, &b).unwrap();
        assert_relative_eq!(x[0], 0.25, epsilon = 1e-12);
        assert_relative_eq!(x[1], -3.0, epsilon = 1e-12);
    }

    fn lcg(state: &mut u64) -> f64 {
        *state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((*state >> 11) as f64) / (1u64 << 53) as f64 - 0.5
    }

    #[test]
    fn random_overdetermined_matches_normal_equations() {
        let mut s = 17u64;
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..6).map(|_| lcg(&mut s)).collect())
            .collect();
        let b: Vec<f64> = (0..20).map(|_| lcg(&mut s)).collect();
        let x = dense_qr_least_squares(&rows, &b).unwrap();
        let m = DMatrix::from_fn(20, 6, |i, j| rows[i][j]);
        let ata = m.transpose() * &m;
        let atb = m.transpose() * DVector::from_vec(b);
        let oracle = ata.cholesky().unwrap().solve(&atb);
        for k in 0..6 {
            assert_relative_eq!(x[k], oracle[k], epsilon = 1e-8);
        }
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let rows = vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]];
        assert!(matches!(
            dense_qr_least_squares(&rows, &[1.0, 2.0, 3.0]),
            Err(MmdError::RankDeficient { .. })
        ));
        let short = vec![vec![1.0, 2.0, 3.0]];
        assert!(dense_qr_least_squares(&short, &[1.0]).is_err());
    }

    #[test]
    fn pivots_on_largest_column_norm() {
        // column 1 has the largest entry, column 0 the largest norm
        let rows = vec![vec![3.0, 5.0], vec![3.0, 0.0], vec![3.0, 0.0]];
        let qr = PivotedQr::from_rows(&rows);
        assert_eq!(qr.permutation(), &[0, 1]);
        assert_relative_eq!(qr.r_diag(0).abs(), 27f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn pseudo_inverse_reproduces_solve() {
        let mut s = 3u64;
        let rows: Vec<Vec<f64>> = (0..9)
            .map(|_| (0..3).map(|_| lcg(&mut s)).collect())
            .collect();
        let b: Vec<f64> = (0..9).map(|_| lcg(&mut s)).collect();
        let qr = PivotedQr::from_rows(&rows);
        let pinv = qr.pseudo_inverse();
        let x = qr.solve(&b);
        for k in 0..3 {
            let y: f64 = pinv[k].iter().zip(&b).map(|(p, q)| p * q).sum();
            assert_relative_eq!(x[k], y, epsilon = 1e-12);
        }
    }
}
