//! Dense linear algebra used by POD and Neural Galerkin: a row-major
//! [`Matrix`], a Jacobi SVD, and truncated / equality-constrained least
//! squares.

mod lstsq;
mod matrix;
mod svd;

pub use lstsq::{
    lstsq_constrained, lstsq_min_norm, solve_dense, ConstrainedSolution, LstsqSolution,
    DEFAULT_REL_TOL,
};
pub use matrix::Matrix;
pub use svd::{svd, SvdResult};

/// Euclidean dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}
