use super::{svd, Matrix};
use crate::error::{Error, Result};

/// Relative singular-value cutoff used when callers have no preference.
pub const DEFAULT_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LstsqSolution {
    pub x: Vec<f64>,
    /// Number of singular values kept after truncation.
    pub rank: usize,
}

impl LstsqSolution {
    /// True when every singular value was truncated (or the system was empty).
    pub fn is_degenerate(&self) -> bool {
        self.rank == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedSolution {
    pub x: Vec<f64>,
    /// Rank of the reduced least-squares problem on the null space of `C`.
    pub rank: usize,
    /// Dimension of the null space of `C`.
    pub null_dim: usize,
    /// The constraint leaves no freedom (null space trivial); `x` is zero.
    pub degenerate: bool,
}

/// Minimum-norm minimizer of `‖A x − b‖₂`, discarding singular values below
/// `rel_tol · s_max`.
pub fn lstsq_min_norm(a: &Matrix, b: &[f64], rel_tol: f64) -> Result<LstsqSolution> {
    if a.rows() != b.len() {
        return Err(Error::dims(format!(
            "least squares with {} rows and rhs of length {}",
            a.rows(),
            b.len()
        )));
    }
    if a.rows() == 0 || a.cols() == 0 {
        return Ok(LstsqSolution {
            x: vec![0.0; a.cols()],
            rank: 0,
        });
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite right-hand side"));
    }
    let f = svd(a)?;
    let rank = f.rank(rel_tol);
    let utb = f.u.tr_matvec(b)?;
    let mut x = vec![0.0; a.cols()];
    for k in 0..rank {
        let coef = utb[k] / f.s[k];
        for (xi, v) in x.iter_mut().zip(f.vt.row(k)) {
            *xi += coef * v;
        }
    }
    Ok(LstsqSolution { x, rank })
}

/// Minimizer of `‖A x − b‖₂` subject to `C x = 0`.
///
/// Nullspace method: an orthonormal basis `N` of `null(C)` comes from the SVD
/// of `C`, the unconstrained problem is solved in `A N`, and the solution is
/// mapped back by `x = N y`. If `C` has full column rank the only feasible
/// point is zero and the solution is flagged degenerate.
pub fn lstsq_constrained(
    a: &Matrix,
    b: &[f64],
    c: &Matrix,
    rel_tol: f64,
) -> Result<ConstrainedSolution> {
    let n = a.cols();
    if c.cols() != n {
        return Err(Error::dims(format!(
            "constraint has {} columns, system has {}",
            c.cols(),
            n
        )));
    }
    if a.rows() != b.len() {
        return Err(Error::dims(format!(
            "least squares with {} rows and rhs of length {}",
            a.rows(),
            b.len()
        )));
    }
    let basis = null_space(c, rel_tol)?;
    let null_dim = basis.cols();
    if null_dim == 0 {
        return Ok(ConstrainedSolution {
            x: vec![0.0; n],
            rank: 0,
            null_dim,
            degenerate: true,
        });
    }
    let reduced = a.matmul(&basis)?;
    let y = lstsq_min_norm(&reduced, b, rel_tol)?;
    let x = basis.matvec(&y.x)?;
    Ok(ConstrainedSolution {
        x,
        rank: y.rank,
        null_dim,
        degenerate: false,
    })
}

/// Orthonormal basis (as columns) of the null space of `c`.
fn null_space(c: &Matrix, rel_tol: f64) -> Result<Matrix> {
    let n = c.cols();
    if c.rows() == 0 || c.max_abs() == 0.0 {
        return Ok(Matrix::identity(n));
    }
    // Pad to at least n rows so the SVD returns a complete right basis.
    let padded = if c.rows() < n {
        c.vstack(&Matrix::zeros(n - c.rows(), n))?
    } else {
        c.clone()
    };
    let f = svd(&padded)?;
    let rank = f.rank(rel_tol);
    let cols: Vec<Vec<f64>> = (rank..n).map(|k| f.vt.row(k).to_vec()).collect();
    if cols.is_empty() {
        return Ok(Matrix::zeros(n, 0));
    }
    Matrix::from_cols(&cols)
}

/// Solves the square system `A x = b` by Gaussian elimination with partial
/// pivoting.
pub fn solve_dense(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(Error::dims("solve_dense needs a square system"));
    }
    let mut m = a.clone();
    let mut x = b.to_vec();
    for k in 0..n {
        let (piv, pmax) = (k..n)
            .map(|i| (i, m[(i, k)].abs()))
            .fold((k, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
        if pmax == 0.0 || !pmax.is_finite() {
            return Err(Error::invalid("singular matrix in solve_dense"));
        }
        if piv != k {
            for j in 0..n {
                let t = m[(k, j)];
                m[(k, j)] = m[(piv, j)];
                m[(piv, j)] = t;
            }
            x.swap(k, piv);
        }
        let d = m[(k, k)];
        for i in k + 1..n {
            let l = m[(i, k)] / d;
            if l == 0.0 {
                continue;
            }
            for j in k..n {
                m[(i, j)] -= l * m[(k, j)];
            }
            x[i] -= l * x[k];
        }
    }
    for k in (0..n).rev() {
        let mut s = x[k];
        for j in k + 1..n {
            s -= m[(k, j)] * x[j];
        }
        x[k] = s / m[(k, k)];
    }
    Ok(x)
}
