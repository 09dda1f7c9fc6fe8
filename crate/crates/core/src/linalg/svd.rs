use super::Matrix;
use crate::error::{Error, Result};

/// Off-diagonal tolerance for the cyclic Jacobi sweeps.
const JACOBI_TOL: f64 = 1e-14;
const MAX_SWEEPS: usize = 80;

/// Thin singular value decomposition `M = U · diag(S) · Vt`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// `m × k` with orthonormal columns.
    pub u: Matrix,
    /// Descending, nonnegative.
    pub s: Vec<f64>,
    /// `k × n` with orthonormal rows.
    pub vt: Matrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (v, s) in us.row_mut(i).iter_mut().zip(&self.s) {
                *v *= s;
            }
        }
        us.matmul(&self.vt).expect("consistent svd factors")
    }

    /// Number of singular values above `rel_tol · s_max`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let smax = self.s.first().copied().unwrap_or(0.0);
        self.s.iter().filter(|&&s| s > rel_tol * smax && s > 0.0).count()
    }
}

/// Thin SVD with `k = min(rows, cols)`.
///
/// One-sided (Hestenes) Jacobi with cyclic sweeps. Matrices with more than
/// four times as many rows as columns are first reduced by a Householder QR so
/// that Jacobi runs on the small triangular factor.
pub fn svd(m: &Matrix) -> Result<SvdResult> {
    if !m.is_finite() {
        return Err(Error::invalid("svd of a matrix with non-finite entries"));
    }
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("svd of an empty matrix"));
    }
    if rows < cols {
        let t = svd(&m.transpose())?;
        return Ok(SvdResult {
            u: t.vt.transpose(),
            s: t.s,
            vt: t.u.transpose(),
        });
    }
    if rows > 4 * cols {
        let (q, r) = householder_qr(m);
        let inner = jacobi_svd(&r);
        return Ok(SvdResult {
            u: q.matmul(&inner.u)?,
            s: inner.s,
            vt: inner.vt,
        });
    }
    Ok(jacobi_svd(m))
}

/// One-sided Jacobi on an `m × n` matrix with `m ≥ n`.
fn jacobi_svd(m: &Matrix) -> SvdResult {
    let (rows, n) = m.shape();
    // Columns stored contiguously.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| m.col(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&cols[p], &cols[q]);
                    let mut a = 0.0;
                    let mut b = 0.0;
                    let mut g = 0.0;
                    for (x, y) in cp.iter().zip(cq) {
                        a += x * x;
                        b += y * y;
                        g += x * y;
                    }
                    (a, b, g)
                };
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut cols, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<(f64, usize)> = cols
        .iter()
        .enumerate()
        .map(|(j, c)| (super::norm2(c), j))
        .collect();
    // Descending by value; ties keep column order so the result is deterministic.
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let s: Vec<f64> = order.iter().map(|o| o.0).collect();
    let smax = s[0];
    let mut ucols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut missing = Vec::new();
    for (k, &(sigma, j)) in order.iter().enumerate() {
        if sigma > 0.0 && sigma > smax * 1e-13 {
            ucols.push(cols[j].iter().map(|x| x / sigma).collect());
        } else {
            ucols.push(vec![0.0; rows]);
            missing.push(k);
        }
    }
    complete_orthonormal(&mut ucols, &missing);

    let mut u = Matrix::zeros(rows, n);
    for (k, c) in ucols.iter().enumerate() {
        for i in 0..rows {
            u[(i, k)] = c[i];
        }
    }
    let mut vt = Matrix::zeros(n, n);
    for (k, &(_, j)) in order.iter().enumerate() {
        vt.row_mut(k).copy_from_slice(&v[j]);
    }
    SvdResult { u, s, vt }
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let cp = &mut lo[p];
    let cq = &mut hi[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Fills the listed (zero) columns with unit vectors orthogonal to all others.
fn complete_orthonormal(cols: &mut [Vec<f64>], missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let rows = cols[0].len();
    let mut candidate = 0;
    for &k in missing {
        loop {
            let mut e = vec![0.0; rows];
            e[candidate % rows] = 1.0;
            candidate += 1;
            // Two passes of Gram-Schmidt against the filled columns.
            for _ in 0..2 {
                for (j, c) in cols.iter().enumerate() {
                    if j == k || c.iter().all(|x| *x == 0.0) {
                        continue;
                    }
                    let d = super::dot(&e, c);
                    for (ei, ci) in e.iter_mut().zip(c) {
                        *ei -= d * ci;
                    }
                }
            }
            let nrm = super::norm2(&e);
            if nrm > 1e-8 {
                cols[k] = e.into_iter().map(|x| x / nrm).collect();
                break;
            }
            if candidate > 2 * rows + missing.len() {
                break;
            }
        }
    }
}

/// Thin Householder QR of an `m × n` matrix, `m ≥ n`: returns `Q` (`m × n`)
/// and upper-triangular `R` (`n × n`).
fn householder_qr(m: &Matrix) -> (Matrix, Matrix) {
    let (rows, n) = m.shape();
    let mut a: Vec<Vec<f64>> = (0..n).map(|j| m.col(j)).collect();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let x = &a[k][k..];
        let alpha = {
            let nrm = super::norm2(x);
            if x[0] >= 0.0 {
                -nrm
            } else {
                nrm
            }
        };
        let mut v: Vec<f64> = x.to_vec();
        v[0] -= alpha;
        let vn = super::norm2(&v);
        if vn > 0.0 {
            for vi in v.iter_mut() {
                *vi /= vn;
            }
        }
        for col in a.iter_mut().skip(k) {
            let seg = &mut col[k..];
            let d = 2.0 * super::dot(&v, seg);
            for (s, vi) in seg.iter_mut().zip(&v) {
                *s -= d * vi;
            }
        }
        reflectors.push(v);
    }
    let mut r = Matrix::zeros(n, n);
    for (j, col) in a.iter().enumerate() {
        for i in 0..=j {
            r[(i, j)] = col[i];
        }
    }
    // Q = H_0 H_1 ... H_{n-1} applied to the first n columns of the identity.
    let mut qcols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; rows];
            e[j] = 1.0;
            e
        })
        .collect();
    for (k, v) in reflectors.iter().enumerate().rev() {
        for col in qcols.iter_mut() {
            let seg = &mut col[k..];
            let d = 2.0 * super::dot(v, seg);
            if d != 0.0 {
                for (s, vi) in seg.iter_mut().zip(v) {
                    *s -= d * vi;
                }
            }
        }
    }
    (Matrix::from_cols(&qcols).expect("uniform columns"), r)
}
