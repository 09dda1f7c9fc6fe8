//! Full-order models: periodic finite-difference discretizations of the
//! benchmark PDEs, time integrators, trajectory datasets and the selection of
//! training and test parameters.

mod grid;
mod ode;
mod problems;
mod sparse;

pub use grid::{d1, d2, Grid, STENCIL_RADIUS};
pub use ode::{
    dopri5, dopri5_observed, implicit_euler, integrate_ode, rk4, Dopri5Options, FnSystem, NewtonOptions, OdeSystem,
    Scheme, Solution, Stats, StepObserver,
};
pub use problems::{
    advection_exact, burgers2d_rhs, rde_rhs, vlasov_dphi, vlasov_rhs, Fom, Local, PdeProblem, RdeConstants,
    ADVECTION_U0, BURGERS1D_BASE, BURGERS1D_BUMP, MAX_DIM, MAX_FIELDS, RDE,
};
pub use sparse::{bicgstab, Csr, Pattern};

use crate::error::{Error, Result};

/// One full-order solution at a fixed parameter. `fields` is laid out as
/// `[time][field][grid point]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub mu: Vec<f64>,
    pub times: Vec<f64>,
    pub n_fields: usize,
    pub n_points: usize,
    pub fields: Vec<f64>,
}

impl Trajectory {
    pub fn new(mu: Vec<f64>, times: Vec<f64>, n_fields: usize, n_points: usize, fields: Vec<f64>) -> Result<Self> {
        if fields.len() != times.len() * n_fields * n_points {
            return Err(Error::dims("trajectory payload size mismatch"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("trajectory times must increase"));
        }
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("trajectory contains non-finite values".into()));
        }
        Ok(Trajectory {
            mu,
            times,
            n_fields,
            n_points,
            fields,
        })
    }

    pub fn frame_len(&self) -> usize {
        self.n_fields * self.n_points
    }

    /// All fields at time index `k`.
    pub fn frame(&self, k: usize) -> &[f64] {
        let m = self.frame_len();
        &self.fields[k * m..(k + 1) * m]
    }

    pub fn field(&self, k: usize, f: usize) -> &[f64] {
        let start = k * self.frame_len() + f * self.n_points;
        &self.fields[start..start + self.n_points]
    }
}

/// Trajectories of one problem on a shared grid and time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotSet {
    pub problem: PdeProblem,
    pub grid: Grid,
    pub trajectories: Vec<Trajectory>,
}

impl SnapshotSet {
    pub fn new(problem: PdeProblem, grid: Grid, trajectories: Vec<Trajectory>) -> Result<Self> {
        if let Some(first) = trajectories.first() {
            for t in &trajectories {
                if t.times != first.times || t.n_points != grid.len() || t.n_fields != problem.n_fields() {
                    return Err(Error::dims("trajectories must share grid and time grid"));
                }
            }
        }
        Ok(SnapshotSet {
            problem,
            grid,
            trajectories,
        })
    }

    pub fn times(&self) -> &[f64] {
        self.trajectories.first().map_or(&[], |t| &t.times)
    }

    pub fn mus(&self) -> Vec<Vec<f64>> {
        self.trajectories.iter().map(|t| t.mu.clone()).collect()
    }

    /// Keeps the trajectories whose parameter matches one of `mus`.
    pub fn subset(&self, mus: &[f64]) -> Result<SnapshotSet> {
        let mut out = Vec::with_capacity(mus.len());
        for &m in mus {
            let t = self
                .trajectories
                .iter()
                .find(|t| (t.mu[0] - m).abs() <= 1e-12 * m.abs().max(1.0))
                .ok_or_else(|| Error::invalid(format!("no trajectory at μ = {m}")))?;
            out.push(t.clone());
        }
        SnapshotSet::new(self.problem, self.grid.clone(), out)
    }
}

/// Full-order solve of `problem` at `mu`, sampled at `times`.
pub fn integrate(problem: PdeProblem, mu: &[f64], grid: &Grid, times: &[f64], scheme: Scheme) -> Result<Trajectory> {
    problem.check_mu(mu)?;
    if grid.dim() != problem.dim() {
        return Err(Error::dims("grid dimension differs from problem dimension"));
    }
    let (lo, hi) = problem.bounds();
    if grid.lo != lo || grid.hi != hi {
        return Err(Error::invalid("grid must span the problem domain"));
    }
    let sys = Fom {
        problem,
        grid,
        mu: mu.to_vec(),
    };
    let y0 = problem.initial_grid(grid, mu);
    let sol = integrate_ode(&sys, &y0, times, scheme)?;
    let fields = sol.y.concat();
    Trajectory::new(mu.to_vec(), times.to_vec(), problem.n_fields(), grid.len(), fields)
}

/// One trajectory per parameter, in the given order.
pub fn generate_dataset(
    problem: PdeProblem,
    mus: &[f64],
    grid: &Grid,
    times: &[f64],
    scheme: Scheme,
) -> Result<SnapshotSet> {
    let trajectories = mus
        .iter()
        .map(|&m| integrate(problem, &[m], grid, times, scheme))
        .collect::<Result<Vec<_>>>()?;
    SnapshotSet::new(problem, grid.clone(), trajectories)
}

/// `count` equally spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// `k` equally spread test values from a candidate grid: the candidates
/// nearest to the centres of `k` equal sub-intervals.
pub fn pick_test_mus(mu_grid: &[f64], k: usize) -> Vec<f64> {
    let n = mu_grid.len();
    if n == 0 || k == 0 {
        return Vec::new();
    }
    (0..k)
        .map(|j| {
            let pos = (2 * j + 1) as f64 * (n - 1) as f64 / (2 * k) as f64;
            mu_grid[pos.round() as usize]
        })
        .collect()
}

/// Greedily adds the candidate farthest from every test value (ties go to
/// the smaller value) until `m` are chosen. Returned in ascending order.
pub fn select_train_test(mu_grid: &[f64], m: usize, test_mus: &[f64]) -> Result<Vec<f64>> {
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300);
    for &t in test_mus {
        if !mu_grid.iter().any(|&c| same(c, t)) {
            return Err(Error::invalid(format!("test value {t} is not a candidate")));
        }
    }
    let mut pool: Vec<f64> = mu_grid
        .iter()
        .copied()
        .filter(|&c| !test_mus.iter().any(|&t| same(c, t)))
        .collect();
    if m > pool.len() {
        return Err(Error::invalid(format!("cannot choose {m} of {} candidates", pool.len())));
    }
    let dist = |c: f64| test_mus.iter().map(|t| (c - t).abs()).fold(f64::INFINITY, f64::min);
    let mut chosen = Vec::with_capacity(m);
    for _ in 0..m {
        let (best, _) = pool.iter().enumerate().fold((0, f64::NEG_INFINITY), |(bi, bd), (i, &c)| {
            let d = dist(c);
            if d > bd || (d == bd && c < pool[bi]) {
                (i, d)
            } else {
                (bi, bd)
            }
        });
        chosen.push(pool.remove(best));
    }
    chosen.sort_by(f64::total_cmp);
    Ok(chosen)
}
