//! Krylov solvers: deflated preconditioned CG, BiCGStab and MINRES.

use std::time::Instant;

use super::{dot, norm2, project_out_constant, CsrMatrix};
use crate::error::{MmdError, Result};

/// Relative tolerance on `1ᵀb` for singular Laplacian systems.
pub const COMPATIBILITY_TOL: f64 = 1e-10;

pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        assert_eq!(self.n_rows, self.n_cols, "operator must be square");
        self.n_rows
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.mul_vec_into(x, y);
    }
}

/// Applies `z ≈ A⁻¹ r`. Implementations must be fixed linear maps.
pub trait Preconditioner: Sync {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(diag: &[f64]) -> Self {
        Self {
            inv_diag: diag
                .iter()
                .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
                .collect(),
        }
    }

    pub fn from_matrix(a: &CsrMatrix) -> Self {
        Self::new(&a.diagonal())
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.iter_mut()
            .zip(r)
            .zip(&self.inv_diag)
            .for_each(|((z, r), d)| *z = r * d);
    }
}

#[derive(Clone, Copy, Debug)]
pub struct KrylovOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Solve on the complement of the constant vector (singular Laplacians).
    pub deflate_constant: bool,
}

impl KrylovOptions {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        Self {
            tol,
            max_iter,
            deflate_constant: false,
        }
    }

    pub fn deflated(mut self) -> Self {
        self.deflate_constant = true;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// True residual `‖b − A x‖ / ‖b‖` at exit.
    pub relative_residual: f64,
    pub seconds: f64,
    pub converged: bool,
    pub breakdown: bool,
}

impl SolveReport {
    pub fn into_result(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(MmdError::NotConverged {
                iterations: self.iterations,
                residual: self.relative_residual,
            })
        }
    }
}

fn true_residual(a: &dyn LinearOperator, x: &[f64], b: &[f64]) -> f64 {
    let mut ax = vec![0.0; b.len()];
    a.apply(x, &mut ax);
    let r: f64 = ax
        .iter()
        .zip(b)
        .map(|(p, q)| (q - p) * (q - p))
        .sum::<f64>()
        .sqrt();
    let bn = norm2(b);
    if bn > 0.0 {
        r / bn
    } else {
        r
    }
}

/// Checks `|1ᵀb| ≤ tol · Σ|b_i|`.
pub fn check_compatibility(b: &[f64], context: &str) -> Result<()> {
    let sum: f64 = b.iter().sum();
    let scale: f64 = b.iter().map(|v| v.abs()).sum();
    let relative_sum = if scale > 0.0 { sum.abs() / scale } else { 0.0 };
    if relative_sum > COMPATIBILITY_TOL {
        return Err(MmdError::Incompatible {
            context: context.to_string(),
            relative_sum,
        });
    }
    Ok(())
}

/// Preconditioned conjugate gradients from a zero initial guess. With
/// deflation the right-hand side must satisfy `1ᵀb = 0` and the returned
/// solution has zero mean.
pub fn pcg(
    a: &dyn LinearOperator,
    b: &[f64],
    opts: &KrylovOptions,
    precond: &dyn Preconditioner,
) -> Result<(Vec<f64>, SolveReport)> {
    let start = Instant::now();
    let n = a.dim();
    assert_eq!(b.len(), n);
    let mut rhs = b.to_vec();
    if opts.deflate_constant {
        check_compatibility(&rhs, "deflated conjugate gradients")?;
        project_out_constant(&mut rhs);
    }
    let mut x = vec![0.0; n];
    let bnorm = norm2(&rhs);
    if bnorm == 0.0 {
        let report = SolveReport {
            iterations: 0,
            relative_residual: 0.0,
            seconds: 0.0,
            converged: true,
            breakdown: false,
        };
        return Ok((x, report));
    }
    let mut r = rhs.clone();
    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    if opts.deflate_constant {
        project_out_constant(&mut z);
    }
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    let mut converged = false;
    let mut breakdown = false;
    while iterations < opts.max_iter {
        a.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            breakdown = true;
            break;
        }
        let alpha = rz / pap;
        x.iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
        r.iter_mut().zip(&ap).for_each(|(r, ap)| *r -= alpha * ap);
        iterations += 1;
        if norm2(&r) <= opts.tol * bnorm {
            converged = true;
            break;
        }
        precond.apply(&r, &mut z);
        if opts.deflate_constant {
            project_out_constant(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
    }
    if opts.deflate_constant {
        project_out_constant(&mut x);
    }
    let relative_residual = true_residual(a, &x, &rhs);
    // the recurrence residual can drift from the true one near machine precision
    converged = converged && relative_residual <= 10.0 * opts.tol;
    let report = SolveReport {
        iterations,
        relative_residual,
        seconds: start.elapsed().as_secs_f64(),
        converged,
        breakdown,
    };
    Ok((x, report))
}

/// Right-preconditioned BiCGStab from a zero initial guess. Breakdown and
/// stagnation are reported as non-convergence, never as an error.
pub fn bicgstab(
    a: &dyn LinearOperator,
    b: &[f64],
    opts: &KrylovOptions,
    precond: &dyn Preconditioner,
) -> (Vec<f64>, SolveReport) {
    let start = Instant::now();
    let n = a.dim();
    assert_eq!(b.len(), n);
    let mut x = vec![0.0; n];
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        let report = SolveReport {
            iterations: 0,
            relative_residual: 0.0,
            seconds: 0.0,
            converged: true,
            breakdown: false,
        };
        return (x, report);
    }
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let (mut rho, mut alpha, mut omega) = (1.0f64, 1.0f64, 1.0f64);
    let mut iterations = 0;
    let mut converged = false;
    let mut breakdown = false;
    let tiny = 1e-300;
    while iterations < opts.max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < tiny * bnorm * bnorm || !rho_new.is_finite() {
            breakdown = true;
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for k in 0..n {
            p[k] = r[k] + beta * (p[k] - omega * v[k]);
        }
        precond.apply(&p, &mut phat);
        a.apply(&phat, &mut v);
        let rv = dot(&r_hat, &v);
        if rv.abs() < tiny || !rv.is_finite() {
            breakdown = true;
            break;
        }
        alpha = rho / rv;
        for k in 0..n {
            s[k] = r[k] - alpha * v[k];
        }
        iterations += 1;
        if norm2(&s) <= opts.tol * bnorm {
            x.iter_mut().zip(&phat).for_each(|(x, p)| *x += alpha * p);
            converged = true;
            break;
        }
        precond.apply(&s, &mut shat);
        a.apply(&shat, &mut t);
        let tt = dot(&t, &t);
        if tt < tiny || !tt.is_finite() {
            breakdown = true;
            break;
        }
        omega = dot(&t, &s) / tt;
        for k in 0..n {
            x[k] += alpha * phat[k] + omega * shat[k];
            r[k] = s[k] - omega * t[k];
        }
        let rn = norm2(&r);
        if !rn.is_finite() {
            breakdown = true;
            break;
        }
        if rn <= opts.tol * bnorm {
            converged = true;
            break;
        }
        if omega.abs() < tiny {
            breakdown = true;
            break;
        }
    }
    let relative_residual = true_residual(a, &x, b);
    converged = converged && relative_residual <= 10.0 * opts.tol;
    let report = SolveReport {
        iterations,
        relative_residual,
        seconds: start.elapsed().as_secs_f64(),
        converged,
        breakdown,
    };
    (x, report)
}

/// Unpreconditioned MINRES for symmetric, possibly indefinite systems.
pub fn minres(a: &dyn LinearOperator, b: &[f64], opts: &KrylovOptions) -> (Vec<f64>, SolveReport) {
    let start = Instant::now();
    let n = a.dim();
    let mut x = vec![0.0; n];
    let beta1 = norm2(b);
    if beta1 == 0.0 {
        let report = SolveReport {
            iterations: 0,
            relative_residual: 0.0,
            seconds: 0.0,
            converged: true,
            breakdown: false,
        };
        return (x, report);
    }
    let mut r1 = b.to_vec();
    let mut r2 = b.to_vec();
    let mut y = b.to_vec();
    let mut v = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut w1 = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let (mut oldb, mut beta) = (0.0f64, beta1);
    let (mut dbar, mut epsln, mut phibar) = (0.0f64, 0.0f64, beta1);
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);
    let mut iterations = 0;
    let mut converged = false;
    let mut breakdown = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let s = 1.0 / beta;
        v.iter_mut().zip(&y).for_each(|(v, y)| *v = s * y);
        a.apply(&v, &mut y);
        if iterations >= 2 {
            let f = beta / oldb;
            y.iter_mut().zip(&r1).for_each(|(y, r)| *y -= f * r);
        }
        let alfa = dot(&v, &y);
        let f = alfa / beta;
        y.iter_mut().zip(&r2).for_each(|(y, r)| *y -= f * r);
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        oldb = beta;
        beta = norm2(&y);
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = (gbar * gbar + beta * beta).sqrt().max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        std::mem::swap(&mut w1, &mut w2);
        std::mem::swap(&mut w2, &mut w);
        for k in 0..n {
            w[k] = (v[k] - oldeps * w1[k] - delta * w2[k]) / gamma;
            x[k] += phi * w[k];
        }
        if phibar <= opts.tol * beta1 {
            converged = true;
            break;
        }
        if beta == 0.0 || !beta.is_finite() {
            breakdown = !beta.is_finite();
            converged = beta == 0.0;
            break;
        }
    }
    let relative_residual = true_residual(a, &x, b);
    converged = converged && relative_residual <= 10.0 * opts.tol;
    let report = SolveReport {
        iterations,
        relative_residual,
        seconds: start.elapsed().as_secs_f64(),
        converged,
        breakdown,
    };
    (x, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sparse::{graph_laplacian, TripletBuilder};
    use approx::assert_relative_eq;

    fn path(n: usize) -> CsrMatrix {
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        graph_laplacian(n, &edges, &vec![1.0; n - 1])
    }

    #[test]
    fn identity_solves_in_one_iteration() {
        let a = CsrMatrix::identity(5);
        let b = [1.0, -2.0, 3.0, 0.5, 7.0];
        let (x, rep) = pcg(&a, &b, &KrylovOptions::new(1e-12, 10), &Identity).unwrap();
        assert_eq!(rep.iterations, 1);
        assert_eq!(x, b.to_vec());
    }

    #[test]
    fn path_laplacian_matches_pseudoinverse() {
        let a = path(3);
        let b = [1.0, 0.0, -1.0];
        let (x, rep) = pcg(&a, &b, &KrylovOptions::new(1e-12, 10).deflated(), &Identity).unwrap();
        assert!(rep.converged);
        let pinv = a.to_dense().pseudo_inverse(1e-12).unwrap();
        let oracle = pinv * nalgebra::DVector::from_column_slice(&b);
        for k in 0..3 {
            assert_relative_eq!(x[k], oracle[k], epsilon = 1e-12);
        }
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(x[2], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn incompatible_rhs_is_rejected() {
        let a = path(4);
        let err = pcg(
            &a,
            &[1.0, 0.0, 0.0, 0.0],
            &KrylovOptions::new(1e-10, 10).deflated(),
            &Identity,
        );
        assert!(matches!(err, Err(MmdError::Incompatible { .. })));
    }

    #[test]
    fn cg_error_decreases_in_energy_norm() {
        // track the A-norm error of successive truncated solves
        let a = path(40);
        let b: Vec<f64> = (0..40).map(|i| ((i as f64) * 0.3).sin()).collect();
        let mut bb = b.clone();
        project_out_constant(&mut bb);
        let (exact, _) = pcg(
            &a,
            &bb,
            &KrylovOptions::new(1e-14, 400).deflated(),
            &Identity,
        )
        .unwrap();
        let mut last = f64::INFINITY;
        for k in 1..30 {
            let (x, _) = pcg(&a, &bb, &KrylovOptions::new(0.0, k).deflated(), &Identity).unwrap();
            let e: Vec<f64> = x.iter().zip(&exact).map(|(p, q)| p - q).collect();
            let energy = dot(&e, &a.mul_vec(&e));
            assert!(energy <= last * (1.0 + 1e-12) + 1e-28);
            last = energy;
        }
    }

    fn nonsymmetric(n: usize) -> CsrMatrix {
        let mut t = TripletBuilder::new(n, n);
        for i in 0..n {
            t.add(i, i, 4.0);
            if i > 0 {
                t.add(i, i - 1, -1.5);
            }
            if i + 1 < n {
                t.add(i, i + 1, -0.5);
            }
        }
        t.build()
    }

    #[test]
    fn bicgstab_solves_nonsymmetric_system() {
        let a = nonsymmetric(50);
        let x_true: Vec<f64> = (0..50).map(|i| (i as f64).cos()).collect();
        let b = a.mul_vec(&x_true);
        let (x, rep) = bicgstab(
            &a,
            &b,
            &KrylovOptions::new(1e-12, 200),
            &Jacobi::from_matrix(&a),
        );
        assert!(rep.converged, "{rep:?}");
        for k in 0..50 {
            assert_relative_eq!(x[k], x_true[k], epsilon = 1e-9);
        }
    }

    #[test]
    fn bicgstab_reports_non_convergence() {
        let a = nonsymmetric(50);
        let b = vec![1.0; 50];
        let (_, rep) = bicgstab(&a, &b, &KrylovOptions::new(1e-14, 1), &Identity);
        assert!(!rep.converged);
        assert!(rep.clone().into_result().is_err());
    }

    #[test]
    fn minres_solves_indefinite_system() {
        let mut t = TripletBuilder::new(3, 3);
        for (i, j, v) in [
            (0, 0, 2.0),
            (1, 1, -3.0),
            (2, 2, 1.0),
            (0, 1, 1.0),
            (1, 0, 1.0),
            (1, 2, 0.5),
            (2, 1, 0.5),
        ] {
            t.add(i, j, v);
        }
        let a = t.build();
        let x_true = [1.0, 2.0, -1.0];
        let b = a.mul_vec(&x_true);
        let (x, rep) = minres(&a, &b, &KrylovOptions::new(1e-12, 50));
        assert!(rep.converged);
        for k in 0..3 {
            assert_relative_eq!(x[k], x_true[k], epsilon = 1e-10);
        }
    }
}
