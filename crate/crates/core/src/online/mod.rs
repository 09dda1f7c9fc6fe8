//! Online prediction: direct forecasting with the hyper-network (CoLoRA-D)
//! and Neural Galerkin integration of the latent state (CoLoRA-EQ).

use std::cell::Cell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{jac_latent, Dual2, LatentFunction};
use crate::error::{Error, Result};
use crate::linalg::{lstsq_constrained, lstsq_min_norm, norm2, Matrix};
use crate::net::Model;
use crate::pde::{dopri5_observed, Dopri5Options, Grid, Local, OdeSystem, PdeProblem, StepObserver, Trajectory};
use crate::pde::{MAX_DIM, MAX_FIELDS};

/// Pointwise right-hand side `f(x, u, ∂u, ∂²u)` of `∂_t u = f`.
pub trait PointRhs {
    fn dim(&self) -> usize;
    fn n_fields(&self) -> usize;
    fn eval(&self, x: &[f64], s: &Local, out: &mut [f64]);
}

/// A benchmark problem at a fixed parameter.
#[derive(Clone, Debug)]
pub struct ProblemRhs {
    pub problem: PdeProblem,
    pub mu: Vec<f64>,
}

impl PointRhs for ProblemRhs {
    fn dim(&self) -> usize {
        self.problem.dim()
    }
    fn n_fields(&self) -> usize {
        self.problem.n_fields()
    }
    fn eval(&self, x: &[f64], s: &Local, out: &mut [f64]) {
        self.problem.local_rhs(x, &self.mu, s, out)
    }
}

/// Where the residual is collocated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Sampling {
    /// Uniform periodic lattice with `per_axis` points along every axis.
    Grid { per_axis: usize },
    /// `count` points drawn uniformly from the domain.
    Uniform { count: usize, seed: u64 },
}

/// How the initial latent state is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitLatent {
    /// `φ(0) = h(t₀, μ)`.
    Hyper,
    /// Gauss–Newton fit of the initial condition, started from the
    /// hyper-network value.
    FitInitial { iterations: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NgConfig {
    pub sampling: Sampling,
    pub lstsq_tol: f64,
    pub rtol: f64,
    pub atol: f64,
    pub conserve_mass: bool,
    pub init: InitLatent,
}

impl NgConfig {
    /// Full desk grid in one dimension, a 64² lattice in two.
    pub fn for_problem(problem: PdeProblem) -> Self {
        let per_axis = if problem.dim() == 1 { problem.default_grid().n[0] } else { 64 };
        NgConfig {
            sampling: Sampling::Grid { per_axis },
            lstsq_tol: 1e-10,
            rtol: 1e-6,
            atol: 1e-6,
            conserve_mass: false,
            init: InitLatent::Hyper,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lstsq_tol > 0.0 && self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::config("Neural Galerkin tolerances must be positive"));
        }
        match self.sampling {
            Sampling::Grid { per_axis } if per_axis < 5 => {
                Err(Error::config("sampling lattice needs at least 5 points per axis"))
            }
            Sampling::Uniform { count, .. } if count == 0 => Err(Error::config("no sample points")),
            _ => Ok(()),
        }
    }
}

/// Collocation points with quadrature weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl Samples {
    pub fn new(lo: &[f64], hi: &[f64], sampling: Sampling) -> Result<Self> {
        let d = lo.len();
        let volume: f64 = lo.iter().zip(hi).map(|(a, b)| b - a).product();
        match sampling {
            Sampling::Grid { per_axis } => {
                let g = Grid::new(vec![per_axis; d], lo.to_vec(), hi.to_vec())?;
                Ok(Self::from_grid(&g))
            }
            Sampling::Uniform { count, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let points = (0..count)
                    .map(|_| (0..d).map(|k| rng.gen_range(lo[k]..hi[k])).collect())
                    .collect();
                Ok(Samples {
                    points,
                    weights: vec![volume / count as f64; count],
                })
            }
        }
    }

    pub fn from_grid(grid: &Grid) -> Self {
        let pts = grid.points();
        Samples {
            points: (0..pts.rows()).map(|i| pts.row(i).to_vec()).collect(),
            weights: vec![grid.cell_volume(); grid.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn matrix(&self) -> Matrix {
        let d = self.points.first().map_or(0, Vec::len);
        let data = self.points.iter().flatten().copied().collect();
        Matrix::new(self.points.len(), d, data).expect("consistent sample dimensions")
    }
}

/// CoLoRA-D: fields at `xs` (`N×d`) for every time, evaluating only the
/// hyper-network and the reduced network.
pub fn forecast_d(model: &Model, mu: &[f64], times: &[f64], xs: &Matrix) -> Result<Trajectory> {
    let nf = model.output_dim();
    let n = xs.rows();
    let mut fields = Vec::with_capacity(times.len() * nf * n);
    for &t in times {
        let phi = model.latent(t, mu);
        let u = model.field(xs, &phi)?;
        for f in 0..nf {
            fields.extend((0..n).map(|i| u[(i, f)]));
        }
    }
    Trajectory::new(mu.to_vec(), times.to_vec(), nf, n, fields)
}

/// Fields decoded from a latent trajectory at `xs`.
pub fn decode(model: &Model, mu: &[f64], latent: &LatentTrajectory, xs: &Matrix) -> Result<Trajectory> {
    let nf = model.output_dim();
    let n = xs.rows();
    let mut fields = Vec::with_capacity(latent.times.len() * nf * n);
    for phi in &latent.phi {
        let u = model.field(xs, phi)?;
        for f in 0..nf {
            fields.extend((0..n).map(|i| u[(i, f)]));
        }
    }
    Trajectory::new(mu.to_vec(), latent.times.clone(), nf, n, fields)
}

fn local_derivs<const D: usize, M: LatentFunction>(model: &M, x: &[f64], phi: &[Dual2<D>], s: &mut Local) {
    let mut xs = [Dual2::<D>::constant(0.0); D];
    for k in 0..D {
        let mut seed = [0.0; D];
        seed[k] = 1.0;
        xs[k] = Dual2::seeded(x[k], seed);
    }
    let mut out = [Dual2::<D>::constant(0.0); MAX_FIELDS];
    let nf = model.output_dim();
    model.eval_generic(&xs, phi, &mut out[..nf]);
    for (f, o) in out[..nf].iter().enumerate() {
        s.u[f] = o.val;
        s.du[f][..D].copy_from_slice(&o.d1);
        s.d2u[f][..D].copy_from_slice(&o.d2);
    }
}

/// Right-hand side `f(x_k, û, ∂û, ∂²û)` at every sample; entry `k·n_f + f`.
pub fn ng_forcing<M: LatentFunction, R: PointRhs + ?Sized>(
    model: &M,
    phi: &[f64],
    xs: &[Vec<f64>],
    rhs: &R,
) -> Result<Vec<f64>> {
    let d = model.input_dim();
    let nf = model.output_dim();
    if d != rhs.dim() || nf != rhs.n_fields() || d > MAX_DIM || nf > MAX_FIELDS {
        return Err(Error::dims("network and problem dimensions disagree"));
    }
    let mut f = vec![0.0; xs.len() * nf];
    let mut s = Local::default();
    let mut r = [0.0; MAX_FIELDS];
    match d {
        1 => {
            let p: Vec<Dual2<1>> = phi.iter().map(|&v| Dual2::constant(v)).collect();
            for (k, x) in xs.iter().enumerate() {
                local_derivs::<1, M>(model, x, &p, &mut s);
                rhs.eval(x, &s, &mut r[..nf]);
                f[k * nf..(k + 1) * nf].copy_from_slice(&r[..nf]);
            }
        }
        _ => {
            let p: Vec<Dual2<2>> = phi.iter().map(|&v| Dual2::constant(v)).collect();
            for (k, x) in xs.iter().enumerate() {
                local_derivs::<2, M>(model, x, &p, &mut s);
                rhs.eval(x, &s, &mut r[..nf]);
                f[k * nf..(k + 1) * nf].copy_from_slice(&r[..nf]);
            }
        }
    }
    Ok(f)
}

/// Batch Jacobian `J = ∂û/∂φ` and forcing `f` at the samples.
pub fn ng_assemble<M: LatentFunction, R: PointRhs + ?Sized>(
    model: &M,
    phi: &[f64],
    xs: &[Vec<f64>],
    rhs: &R,
) -> Result<(Matrix, Vec<f64>)> {
    let f = ng_forcing(model, phi, xs, rhs)?;
    Ok((jac_latent(model, phi, xs), f))
}

/// Mass constraint rows: `C[f][j] = Σ_k w_k ∂û_f(x_k)/∂φ_j`.
pub fn mass_constraint(jac: &Matrix, weights: &[f64], n_fields: usize) -> Matrix {
    let q = jac.cols();
    let mut c = Matrix::zeros(n_fields, q);
    for (k, &w) in weights.iter().enumerate() {
        for f in 0..n_fields {
            let row = jac.row(k * n_fields + f);
            for (cj, &v) in c.row_mut(f).iter_mut().zip(row) {
                *cj += w * v;
            }
        }
    }
    c
}

pub fn conserve_mass_constraint<M: LatentFunction>(
    model: &M,
    phi: &[f64],
    xs: &[Vec<f64>],
    weights: &[f64],
) -> Matrix {
    mass_constraint(&jac_latent(model, phi, xs), weights, model.output_dim())
}

/// Quadrature mass of every field.
pub fn mass<M: LatentFunction>(model: &M, phi: &[f64], xs: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let nf = model.output_dim();
    let mut m = vec![0.0; nf];
    for (x, &w) in xs.iter().zip(weights) {
        for (mf, u) in m.iter_mut().zip(model.eval(x, phi)) {
            *mf += w * u;
        }
    }
    m
}

/// Solution of the Galerkin least-squares problem at one state.
#[derive(Clone, Debug, PartialEq)]
pub struct NgStep {
    pub phi_dot: Vec<f64>,
    /// `‖J φ̇ − f‖₂`.
    pub residual: f64,
    pub f_norm: f64,
    /// Every singular value was truncated.
    pub degenerate: bool,
    /// `max |C φ̇|` when a constraint was imposed.
    pub constraint: Option<f64>,
}

/// `φ̇ = argmin ‖J φ̇ − f‖`, optionally subject to `C φ̇ = 0`.
pub fn ng_rhs(jac: &Matrix, f: &[f64], constraint: Option<&Matrix>, tol: f64) -> Result<NgStep> {
    if !jac.is_finite() || f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Galerkin system contains non-finite entries".into()));
    }
    let (phi_dot, degenerate, cv) = match constraint {
        None => {
            let s = lstsq_min_norm(jac, f, tol)?;
            let deg = s.is_degenerate();
            (s.x, deg, None)
        }
        Some(c) => {
            let s = lstsq_constrained(jac, f, c, tol)?;
            let v = c.matvec(&s.x)?.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            (s.x, s.degenerate || s.rank == 0, Some(v))
        }
    };
    let jp = jac.matvec(&phi_dot)?;
    let residual = norm2(&jp.iter().zip(f).map(|(a, b)| a - b).collect::<Vec<_>>());
    if phi_dot.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("latent velocity is non-finite".into()));
    }
    Ok(NgStep {
        phi_dot,
        residual,
        f_norm: norm2(f),
        degenerate,
        constraint: cv,
    })
}

/// Assemble and solve at `phi`, imposing the mass constraint if requested.
pub fn ng_solve<M: LatentFunction, R: PointRhs + ?Sized>(
    model: &M,
    rhs: &R,
    samples: &Samples,
    phi: &[f64],
    tol: f64,
    conserve: bool,
) -> Result<NgStep> {
    let (j, f) = ng_assemble(model, phi, &samples.points, rhs)?;
    if conserve {
        let c = mass_constraint(&j, &samples.weights, model.output_dim());
        ng_rhs(&j, &f, Some(&c), tol)
    } else {
        ng_rhs(&j, &f, None, tol)
    }
}

/// Latent states at the output times with diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentTrajectory {
    pub times: Vec<f64>,
    pub phi: Vec<Vec<f64>>,
    /// Least-squares residual `‖J φ̇ − f‖` at each output state.
    pub residuals: Vec<f64>,
    /// Largest `|C φ̇|` over all right-hand-side evaluations (0 without
    /// constraint).
    pub max_constraint: f64,
    pub steps: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

impl LatentTrajectory {
    /// `max_k |φ(t_{k+1}) − φ(t_k)| / Δt` per interval.
    pub fn latent_speeds(&self) -> Vec<f64> {
        self.times
            .windows(2)
            .zip(self.phi.windows(2))
            .map(|(t, p)| {
                p[1].iter()
                    .zip(&p[0])
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
                    / (t[1] - t[0])
            })
            .collect()
    }
}

struct Galerkin<'a, M, R: ?Sized> {
    model: &'a M,
    rhs: &'a R,
    samples: &'a Samples,
    tol: f64,
    conserve: bool,
    max_constraint: Cell<f64>,
}

impl<M: LatentFunction, R: PointRhs + ?Sized> OdeSystem for Galerkin<'_, M, R> {
    fn dim(&self) -> usize {
        self.model.latent_dim()
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let s = ng_solve(self.model, self.rhs, self.samples, y, self.tol, self.conserve)?;
        if let Some(c) = s.constraint {
            self.max_constraint.set(self.max_constraint.get().max(c));
        }
        dy.copy_from_slice(&s.phi_dot);
        Ok(())
    }
}

/// Newton projection of `phi` back onto the level set of the quadrature mass.
pub fn project_mass<M: LatentFunction>(
    model: &M,
    phi: &mut [f64],
    samples: &Samples,
    target: &[f64],
) -> Result<()> {
    let scale = target.iter().fold(1e-300f64, |m, v| m.max(v.abs()));
    for _ in 0..8 {
        let m = mass(model, phi, &samples.points, &samples.weights);
        let r: Vec<f64> = m.iter().zip(target).map(|(a, b)| b - a).collect();
        if r.iter().all(|v| v.abs() <= 4.0 * f64::EPSILON * scale) {
            break;
        }
        let c = conserve_mass_constraint(model, phi, &samples.points, &samples.weights);
        let d = lstsq_min_norm(&c, &r, 1e-12)?;
        if d.is_degenerate() {
            break;
        }
        for (p, v) in phi.iter_mut().zip(&d.x) {
            *p += v;
        }
    }
    Ok(())
}

struct Recorder<'a, M, R: ?Sized> {
    sys: &'a Galerkin<'a, M, R>,
    mass0: Option<Vec<f64>>,
    residuals: Vec<f64>,
}

impl<M: LatentFunction, R: PointRhs + ?Sized> StepObserver for Recorder<'_, M, R> {
    fn accepted(&mut self, _t: f64, y: &mut [f64]) -> Result<bool> {
        match &self.mass0 {
            Some(m0) => {
                project_mass(self.sys.model, y, self.sys.samples, m0)?;
                Ok(true)
            }
            None => Ok(false),
        }
    }

    fn output(&mut self, _t: f64, y: &mut [f64]) -> Result<()> {
        if let Some(m0) = &self.mass0 {
            project_mass(self.sys.model, y, self.sys.samples, m0)?;
        }
        let s = ng_solve(self.sys.model, self.sys.rhs, self.sys.samples, y, self.sys.tol, self.sys.conserve)?;
        self.residuals.push(s.residual);
        Ok(())
    }
}

/// Integrates `J(φ) φ̇ = f(φ)` in the least-squares sense with adaptive
/// Dormand–Prince steps from `phi0` at `times[0]`.
pub fn integrate_latent<M: LatentFunction, R: PointRhs + ?Sized>(
    model: &M,
    rhs: &R,
    samples: &Samples,
    phi0: &[f64],
    times: &[f64],
    cfg: &NgConfig,
) -> Result<LatentTrajectory> {
    cfg.validate()?;
    if samples.len() * model.output_dim() < model.latent_dim() {
        return Err(Error::config("fewer sample rows than latent dimensions"));
    }
    let sys = Galerkin {
        model,
        rhs,
        samples,
        tol: cfg.lstsq_tol,
        conserve: cfg.conserve_mass,
        max_constraint: Cell::new(0.0),
    };
    let mut rec = Recorder {
        sys: &sys,
        mass0: cfg
            .conserve_mass
            .then(|| mass(model, phi0, &samples.points, &samples.weights)),
        residuals: Vec::with_capacity(times.len()),
    };
    let sol = dopri5_observed(&sys, phi0, times, &Dopri5Options::new(cfg.rtol, cfg.atol), &mut rec)?;
    let residuals = rec.residuals;
    Ok(LatentTrajectory {
        times: sol.t,
        phi: sol.y,
        residuals,
        max_constraint: sys.max_constraint.get(),
        steps: sol.stats.steps,
        rejected: sol.stats.rejected,
        rhs_evals: sol.stats.rhs_evals,
    })
}

/// Gauss–Newton fit of `φ` to the target fields at the samples.
pub fn fit_latent<M: LatentFunction>(
    model: &M,
    phi0: &[f64],
    xs: &[Vec<f64>],
    target: &[f64],
    iterations: usize,
) -> Result<Vec<f64>> {
    let nf = model.output_dim();
    let mut phi = phi0.to_vec();
    for _ in 0..iterations {
        let j = jac_latent(model, &phi, xs);
        let mut r = Vec::with_capacity(xs.len() * nf);
        for (k, x) in xs.iter().enumerate() {
            let u = model.eval(x, &phi);
            r.extend((0..nf).map(|f| target[k * nf + f] - u[f]));
        }
        let d = lstsq_min_norm(&j, &r, 1e-10)?;
        for (p, v) in phi.iter_mut().zip(&d.x) {
            *p += v;
        }
        if norm2(&d.x) <= 1e-14 * norm2(&phi).max(1.0) {
            break;
        }
    }
    Ok(phi)
}

/// CoLoRA-EQ for a benchmark problem: initial latent from the model, then
/// Galerkin integration over `times`.
pub fn integrate_eq(
    model: &Model,
    problem: PdeProblem,
    mu: &[f64],
    times: &[f64],
    cfg: &NgConfig,
) -> Result<LatentTrajectory> {
    problem.check_mu(mu)?;
    let (lo, hi) = problem.bounds();
    let samples = Samples::new(&lo, &hi, cfg.sampling)?;
    let t0 = *times.first().ok_or_else(|| Error::invalid("no output times"))?;
    let mut phi0 = model.latent(t0, mu);
    if let InitLatent::FitInitial { iterations } = cfg.init {
        let nf = problem.n_fields();
        let mut target = vec![0.0; samples.len() * nf];
        for (k, x) in samples.points.iter().enumerate() {
            problem.initial(x, mu, &mut target[k * nf..(k + 1) * nf]);
        }
        phi0 = fit_latent(model, &phi0, &samples.points, &target, iterations)?;
    }
    let rhs = ProblemRhs {
        problem,
        mu: mu.to_vec(),
    };
    integrate_latent(model, &rhs, &samples, &phi0, times, cfg)
}

/// Relative least-squares residual `‖J φ̇* − f‖ / ‖f‖` over a 2-D lattice of
/// latent states; entry `(i, j)` belongs to `(axis0[i], axis1[j])`.
pub fn residual_landscape<M: LatentFunction, R: PointRhs + ?Sized>(
    model: &M,
    rhs: &R,
    samples: &Samples,
    axis0: &[f64],
    axis1: &[f64],
    tol: f64,
) -> Result<Matrix> {
    if model.latent_dim() != 2 {
        return Err(Error::invalid("residual landscape needs a two-dimensional latent space"));
    }
    let mut out = Matrix::zeros(axis0.len(), axis1.len());
    for (i, &a) in axis0.iter().enumerate() {
        for (j, &b) in axis1.iter().enumerate() {
            let s = ng_solve(model, rhs, samples, &[a, b], tol, false)?;
            out[(i, j)] = if s.f_norm > 0.0 { s.residual / s.f_norm } else { s.residual };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
