//! Linear reference methods: proper orthogonal decomposition (POD) and
//! piecewise-linear interpolation of trajectories in parameter space.

use crate::error::{Error, Result};
use crate::linalg::{svd, Matrix};
use crate::pde::{SnapshotSet, Trajectory};

/// Orthonormal reduced basis from the leading left singular vectors of a
/// snapshot matrix.
#[derive(Clone, Debug)]
pub struct PodBasis {
    /// `dof × n`.
    pub projection: Matrix,
    /// All singular values of the snapshot matrix, descending.
    pub singular_values: Vec<f64>,
    pub n: usize,
}

impl PodBasis {
    pub fn fit(set: &SnapshotSet, n: usize) -> Result<Self> {
        let s = snapshot_matrix(set)?;
        if n == 0 || n > s.cols().min(s.rows()) {
            return Err(Error::invalid(format!(
                "reduced dimension {n} outside 1..={}",
                s.cols().min(s.rows())
            )));
        }
        let f = svd(&s)?;
        let mut projection = Matrix::zeros(s.rows(), n);
        for i in 0..s.rows() {
            projection.row_mut(i).copy_from_slice(&f.u.row(i)[..n]);
        }
        Ok(PodBasis {
            projection,
            singular_values: f.s,
            n,
        })
    }

    pub fn dof(&self) -> usize {
        self.projection.rows()
    }

    /// `V Vᵀ y`.
    pub fn project(&self, y: &[f64]) -> Result<Vec<f64>> {
        let c = self.projection.tr_matvec(y)?;
        self.projection.matvec(&c)
    }

    /// Fraction of snapshot energy captured by the retained modes.
    pub fn retained_energy(&self) -> f64 {
        let total: f64 = self.singular_values.iter().map(|s| s * s).sum();
        let kept: f64 = self.singular_values[..self.n].iter().map(|s| s * s).sum();
        if total == 0.0 {
            1.0
        } else {
            kept / total
        }
    }
}

/// Columns are the frames of every trajectory, in trajectory then time order.
pub fn snapshot_matrix(set: &SnapshotSet) -> Result<Matrix> {
    let first = set
        .trajectories
        .first()
        .ok_or_else(|| Error::invalid("empty snapshot set"))?;
    let dof = first.frame_len();
    let cols: usize = set.trajectories.iter().map(|t| t.times.len()).sum();
    let mut m = Matrix::zeros(dof, cols);
    let mut j = 0;
    for t in &set.trajectories {
        for k in 0..t.times.len() {
            for (i, &v) in t.frame(k).iter().enumerate() {
                m[(i, j)] = v;
            }
            j += 1;
        }
    }
    Ok(m)
}

/// Relative Frobenius error of projecting the test snapshots onto the
/// `n`-dimensional POD space of the training snapshots.
pub fn pod_error(train: &SnapshotSet, test: &SnapshotSet, n: usize) -> Result<f64> {
    let basis = PodBasis::fit(train, n)?;
    projection_error(&basis, test)
}

pub fn projection_error(basis: &PodBasis, test: &SnapshotSet) -> Result<f64> {
    let mut err = 0.0;
    let mut norm = 0.0;
    for t in &test.trajectories {
        if t.frame_len() != basis.dof() {
            return Err(Error::dims("test frames do not match the basis dimension"));
        }
        for k in 0..t.times.len() {
            let y = t.frame(k);
            let p = basis.project(y)?;
            err += y.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            norm += y.iter().map(|a| a * a).sum::<f64>();
        }
    }
    if norm == 0.0 {
        return Ok(err.sqrt());
    }
    Ok((err / norm).sqrt())
}

/// POD errors for `n = 1..=n_max`, computed from a single decomposition.
pub fn pod_error_sweep(train: &SnapshotSet, test: &SnapshotSet, n_max: usize) -> Result<Vec<(usize, f64)>> {
    let full = PodBasis::fit(train, n_max)?;
    (1..=n_max)
        .map(|n| {
            let mut projection = Matrix::zeros(full.dof(), n);
            for i in 0..full.dof() {
                projection.row_mut(i).copy_from_slice(&full.projection.row(i)[..n]);
            }
            let b = PodBasis {
                projection,
                singular_values: full.singular_values.clone(),
                n,
            };
            Ok((n, projection_error(&b, test)?))
        })
        .collect()
}

/// Piecewise-linear interpolation in the (scalar) parameter between the two
/// training trajectories bracketing `mu_star`; clamps outside the range.
pub fn interp_baseline(train: &SnapshotSet, mu_star: f64) -> Result<Trajectory> {
    if train.trajectories.len() < 2 {
        return Err(Error::invalid("interpolation needs at least two training trajectories"));
    }
    if !mu_star.is_finite() {
        return Err(Error::invalid("non-finite parameter"));
    }
    let mut order: Vec<&Trajectory> = train.trajectories.iter().collect();
    order.sort_by(|a, b| a.mu[0].total_cmp(&b.mu[0]));
    let lo = order[0];
    let hi = order[order.len() - 1];
    let (a, b, w) = if mu_star <= lo.mu[0] {
        (lo, lo, 0.0)
    } else if mu_star >= hi.mu[0] {
        (hi, hi, 0.0)
    } else {
        let i = order.partition_point(|t| t.mu[0] <= mu_star) - 1;
        let (a, b) = (order[i], order[i + 1]);
        (a, b, (mu_star - a.mu[0]) / (b.mu[0] - a.mu[0]))
    };
    let fields = if w == 0.0 {
        a.fields.clone()
    } else {
        a.fields.iter().zip(&b.fields).map(|(x, y)| (1.0 - w) * x + w * y).collect()
    };
    let mut mu = a.mu.clone();
    mu[0] = mu_star;
    Trajectory::new(mu, a.times.clone(), a.n_fields, a.n_points, fields)
}
