use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Uniform periodic tensor grid. Point `(i₀, …, i_{d−1})` sits at
/// `lo_k + i_k h_k`; the flat index is row-major with the last axis fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n: Vec<usize>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Grid {
    pub fn new(n: Vec<usize>, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if n.is_empty() || n.len() != lo.len() || n.len() != hi.len() {
            return Err(Error::invalid("grid dimension mismatch"));
        }
        if n.iter().any(|&k| k < 5) {
            return Err(Error::invalid("periodic stencils need at least 5 points per axis"));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(h > l) || !l.is_finite() || !h.is_finite()) {
            return Err(Error::invalid("grid bounds must satisfy lo < hi"));
        }
        Ok(Grid { n, lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.n[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.spacing(k)).product()
    }

    /// Flat-index stride of `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.n[axis + 1..].iter().product()
    }

    pub fn multi_index(&self, mut idx: usize, out: &mut [usize]) {
        for k in (0..self.dim()).rev() {
            out[k] = idx % self.n[k];
            idx /= self.n[k];
        }
    }

    pub fn point(&self, idx: usize, out: &mut [f64]) {
        let mut m = [0usize; 4];
        self.multi_index(idx, &mut m[..self.dim()]);
        for k in 0..self.dim() {
            out[k] = self.lo[k] + m[k] as f64 * self.spacing(k);
        }
    }

    /// All grid points as an `N×d` matrix.
    pub fn points(&self) -> Matrix {
        let d = self.dim();
        let mut m = Matrix::zeros(self.len(), d);
        for i in 0..self.len() {
            self.point(i, m.row_mut(i));
        }
        m
    }

    /// Flat index of the neighbour `offset` steps away along `axis`, wrapping.
    #[inline]
    pub fn shift(&self, idx: usize, axis: usize, offset: isize) -> usize {
        let s = self.stride(axis);
        let n = self.n[axis];
        let i = (idx / s) % n;
        let j = (i as isize + offset).rem_euclid(n as isize) as usize;
        idx - i * s + j * s
    }
}

/// Fourth-order central first derivative along `axis`.
pub fn d1(grid: &Grid, u: &[f64], axis: usize, out: &mut [f64]) {
    let c = 1.0 / (12.0 * grid.spacing(axis));
    along_axis(grid, u, axis, out, |m2, m1, _, p1, p2| c * (m2 - 8.0 * m1 + 8.0 * p1 - p2));
}

/// Fourth-order central second derivative along `axis`.
pub fn d2(grid: &Grid, u: &[f64], axis: usize, out: &mut [f64]) {
    let h = grid.spacing(axis);
    let c = 1.0 / (12.0 * h * h);
    along_axis(grid, u, axis, out, |m2, m1, z, p1, p2| {
        c * (-m2 + 16.0 * m1 - 30.0 * z + 16.0 * p1 - p2)
    });
}

#[inline]
fn along_axis(grid: &Grid, u: &[f64], axis: usize, out: &mut [f64], f: impl Fn(f64, f64, f64, f64, f64) -> f64) {
    let n = grid.n[axis];
    let s = grid.stride(axis);
    let outer = grid.len() / (n * s);
    for o in 0..outer {
        for inner in 0..s {
            let base = o * n * s + inner;
            let at = |i: usize| u[base + (i % n) * s];
            for i in 0..n {
                out[base + i * s] = f(at(i + n - 2), at(i + n - 1), at(i), at(i + 1), at(i + 2));
            }
        }
    }
}

/// Offsets (per axis) that the fourth-order stencils touch.
pub const STENCIL_RADIUS: isize = 2;
