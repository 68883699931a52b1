//! Dense and sparse linear algebra used by the GMLS fits, the area-potential
//! solves and the finite-volume systems.

pub mod amg;
pub mod bordered;
pub mod dense;
pub mod ilu;
pub mod krylov;
pub mod sparse;

pub use amg::{AmgConfig, AmgPreconditioner};
pub use bordered::{bordered_solve, bordered_solve_nonsymmetric};
pub use dense::{dense_qr_least_squares, PivotedQr};
pub use ilu::Ilu0;
pub use krylov::{bicgstab, pcg, Identity, Jacobi, KrylovOptions, Preconditioner, SolveReport};
pub use sparse::{CsrMatrix, TripletBuilder};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Removes the arithmetic mean.
pub(crate) fn project_out_constant(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}
