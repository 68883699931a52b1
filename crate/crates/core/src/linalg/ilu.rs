//! Incomplete LU factorization with zero fill-in.

use super::krylov::Preconditioner;
use super::CsrMatrix;

/// `L U ≈ A` on the sparsity pattern of `A`; `L` has a unit diagonal and is
/// stored below the diagonal of `lu`, `U` on and above it.
pub struct Ilu0 {
    lu: CsrMatrix,
    diag_pos: Vec<usize>,
    /// Pivots replaced because they were (nearly) zero.
    pub replaced_pivots: usize,
}

impl Ilu0 {
    /// Requires sorted column indices, as produced by `TripletBuilder`.
    pub fn new(a: &CsrMatrix) -> Self {
        assert_eq!(a.n_rows, a.n_cols, "ILU needs a square matrix");
        let n = a.n_rows;
        let mut lu = a.clone();
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        let mut replaced = 0;
        let mut diag_pos = vec![usize::MAX; n];
        let mut pos_in_row = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for p in start..end {
                pos_in_row[lu.col_idx[p]] = p;
            }
            for p in start..end {
                let k = lu.col_idx[p];
                if k >= i {
                    break;
                }
                let factor = lu.values[p] / lu.values[diag_pos[k]];
                lu.values[p] = factor;
                for q in diag_pos[k] + 1..lu.row_ptr[k + 1] {
                    let target = pos_in_row[lu.col_idx[q]];
                    if target != usize::MAX {
                        lu.values[target] -= factor * lu.values[q];
                    }
                }
            }
            let d = pos_in_row[i];
            if d == usize::MAX {
                panic!("row {i} has no stored diagonal entry");
            }
            if lu.values[d].abs() < 1e-14 * scale {
                lu.values[d] = if lu.values[d] < 0.0 { -1e-8 } else { 1e-8 } * scale;
                replaced += 1;
            }
            diag_pos[i] = d;
            for p in start..end {
                pos_in_row[lu.col_idx[p]] = usize::MAX;
            }
        }
        if replaced > 0 {
            log::debug!("ILU(0) replaced {replaced} small pivots");
        }
        Self {
            lu,
            diag_pos,
            replaced_pivots: replaced,
        }
    }
}

impl Preconditioner for Ilu0 {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        let lu = &self.lu;
        for i in 0..n {
            let mut s = r[i];
            for p in lu.row_ptr[i]..self.diag_pos[i] {
                s -= lu.values[p] * z[lu.col_idx[p]];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let d = self.diag_pos[i];
            let mut s = z[i];
            for p in d + 1..lu.row_ptr[i + 1] {
                s -= lu.values[p] * z[lu.col_idx[p]];
            }
            z[i] = s / lu.values[d];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{bicgstab, Jacobi, KrylovOptions, TripletBuilder};

    #[test]
    fn exact_on_tridiagonal_matrices() {
        // no fill-in occurs, so ILU(0) is the exact LU factorization
        let n = 20;
        let mut t = TripletBuilder::new(n, n);
        for i in 0..n {
            t.add(i, i, 4.0 + i as f64 * 0.1);
            if i + 1 < n {
                t.add(i, i + 1, -1.0);
                t.add(i + 1, i, -2.0);
            }
        }
        let a = t.build();
        let ilu = Ilu0::new(&a);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let mut x = vec![0.0; n];
        ilu.apply(&b, &mut x);
        let ax = a.mul_vec(&x);
        for k in 0..n {
            assert!((ax[k] - b[k]).abs() < 1e-12);
        }
        let dense = a
            .to_dense()
            .lu()
            .solve(&nalgebra::DVector::from_column_slice(&b))
            .unwrap();
        for k in 0..n {
            assert!((dense[k] - x[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn beats_jacobi_on_convection_diffusion() {
        // upwinded 2D convection-diffusion on a 40 × 40 grid
        let m = 40;
        let n = m * m;
        let (eps, c) = (0.01, 1.0);
        let mut t = TripletBuilder::new(n, n);
        for iy in 0..m {
            for ix in 0..m {
                let i = iy * m + ix;
                t.add(i, i, 4.0 * eps + 2.0 * c);
                if ix > 0 {
                    t.add(i, i - 1, -eps - c);
                }
                if ix + 1 < m {
                    t.add(i, i + 1, -eps);
                }
                if iy > 0 {
                    t.add(i, i - m, -eps - c);
                }
                if iy + 1 < m {
                    t.add(i, i + m, -eps);
                }
            }
        }
        let a = t.build();
        let b = vec![1.0; n];
        let opts = KrylovOptions::new(1e-10, 2000);
        let (_, ilu) = bicgstab(&a, &b, &opts, &Ilu0::new(&a));
        let (_, jac) = bicgstab(&a, &b, &opts, &Jacobi::from_matrix(&a));
        assert!(ilu.converged, "{ilu:?}");
        assert!(
            !jac.converged || ilu.iterations < jac.iterations,
            "{ilu:?} vs {jac:?}"
        );
    }
}
