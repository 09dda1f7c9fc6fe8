use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::grid::{d1, d2, Grid, STENCIL_RADIUS};
use super::ode::{OdeSystem, Scheme};
use super::sparse::Pattern;
use crate::error::{Error, Result};
use crate::net::Activation;

/// Largest number of field components.
pub const MAX_FIELDS: usize = 2;
/// Largest spatial dimension.
pub const MAX_DIM: usize = 2;

/// Field values and their first and pure second spatial derivatives at one
/// point; `du[f][k] = ∂u_f/∂x_k`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Local {
    pub u: [f64; MAX_FIELDS],
    pub du: [[f64; MAX_DIM]; MAX_FIELDS],
    pub d2u: [[f64; MAX_DIM]; MAX_FIELDS],
}

/// Constants of the rotating-detonation model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdeConstants {
    pub nu: f64,
    pub k_pre: f64,
    pub alpha: f64,
    pub eta_c: f64,
    pub eta_p: f64,
    pub r: f64,
    pub eps: f64,
}

pub const RDE: RdeConstants = RdeConstants {
    nu: 0.025,
    k_pre: 1.0,
    alpha: 0.3,
    eta_c: 1.1,
    eta_p: 0.5,
    r: 5.0,
    eps: 0.11,
};

impl RdeConstants {
    pub fn omega(&self, eta: f64) -> f64 {
        self.k_pre * ((eta - self.eta_c) / self.alpha).exp()
    }

    pub fn beta(&self, eta: f64, mu: f64) -> f64 {
        mu / (1.0 + (self.r * (eta - self.eta_p)).exp())
    }

    pub fn xi(&self, eta: f64) -> f64 {
        -self.eps * eta
    }
}

/// Profile transported by the advection problem.
pub const ADVECTION_U0: Activation = Activation::Gaussian { center: 0.5, width: 0.08 };

/// Baseline and bump height of the one-dimensional Burgers initial condition.
pub const BURGERS1D_BASE: f64 = 1.0;
pub const BURGERS1D_BUMP: f64 = 0.5;

/// The parameterized PDEs available to the solvers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PdeProblem {
    /// `u_t = −μ u_x` on `[0, 1)`.
    Advection,
    /// `u_t = −u u_x + μ u_xx` on `[0, 1)` with a bump on a constant state.
    Burgers1d,
    /// Two-component viscous Burgers on `[0, 1)²`.
    Burgers2d,
    /// Transport of a phase-space density on `[−1, 1)²`.
    Vlasov,
    /// Rotating detonation engine, fields `(η, λ)` on `[0, 2π)`.
    Rde,
}

/// `∂ₓ` of the electric potential `−(0.2 + 0.2 cos(πx⁴) + 0.1 sin(πx))`.
pub fn vlasov_dphi(x: f64) -> f64 {
    0.8 * PI * x.powi(3) * (PI * x.powi(4)).sin() - 0.1 * PI * (PI * x).cos()
}

impl PdeProblem {
    pub const ALL: [PdeProblem; 5] = [
        PdeProblem::Advection,
        PdeProblem::Burgers1d,
        PdeProblem::Burgers2d,
        PdeProblem::Vlasov,
        PdeProblem::Rde,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PdeProblem::Advection => "advection",
            PdeProblem::Burgers1d => "burgers1d",
            PdeProblem::Burgers2d => "burgers2d",
            PdeProblem::Vlasov => "vlasov",
            PdeProblem::Rde => "rde",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::config(format!("unknown problem `{name}`")))
    }

    pub fn dim(&self) -> usize {
        match self {
            PdeProblem::Burgers2d | PdeProblem::Vlasov => 2,
            _ => 1,
        }
    }

    pub fn n_fields(&self) -> usize {
        match self {
            PdeProblem::Burgers2d | PdeProblem::Rde => 2,
            _ => 1,
        }
    }

    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            PdeProblem::Advection | PdeProblem::Burgers1d => (vec![0.0], vec![1.0]),
            PdeProblem::Burgers2d => (vec![0.0, 0.0], vec![1.0, 1.0]),
            PdeProblem::Vlasov => (vec![-1.0, -1.0], vec![1.0, 1.0]),
            PdeProblem::Rde => (vec![0.0], vec![2.0 * PI]),
        }
    }

    pub fn mu_range(&self) -> (f64, f64) {
        match self {
            PdeProblem::Advection => (0.5, 1.0),
            PdeProblem::Burgers1d | PdeProblem::Burgers2d => (1e-3, 1e-2),
            PdeProblem::Vlasov => (0.2, 0.4),
            PdeProblem::Rde => (2.0, 3.1),
        }
    }

    pub fn t_end(&self) -> f64 {
        match self {
            PdeProblem::Vlasov => 5.0,
            PdeProblem::Rde => 20.0,
            _ => 1.0,
        }
    }

    /// Desk-scale grid.
    pub fn default_grid(&self) -> Grid {
        let (lo, hi) = self.bounds();
        let n = match self {
            PdeProblem::Advection => vec![512],
            PdeProblem::Burgers1d | PdeProblem::Rde => vec![256],
            PdeProblem::Burgers2d | PdeProblem::Vlasov => vec![128, 128],
        };
        Grid::new(n, lo, hi).expect("static grid")
    }

    pub fn default_scheme(&self) -> Scheme {
        match self {
            PdeProblem::Advection => Scheme::Dopri5 { rtol: 1e-8, atol: 1e-10 },
            PdeProblem::Vlasov => Scheme::Dopri5 { rtol: 1e-8, atol: 1e-10 },
            PdeProblem::Burgers1d | PdeProblem::Burgers2d => Scheme::ImplicitEuler { dt: 1e-3 },
            PdeProblem::Rde => Scheme::ImplicitEuler { dt: 1e-2 },
        }
    }

    /// Whether the right-hand side uses second derivatives.
    pub fn second_order(&self) -> bool {
        !matches!(self, PdeProblem::Advection | PdeProblem::Vlasov)
    }

    pub fn check_mu(&self, mu: &[f64]) -> Result<()> {
        let (lo, hi) = self.mu_range();
        if mu.len() != 1 || !(mu[0] >= lo - 1e-12 && mu[0] <= hi + 1e-12) {
            return Err(Error::invalid(format!(
                "{}: parameter {:?} outside [{lo}, {hi}]",
                self.name(),
                mu
            )));
        }
        Ok(())
    }

    /// `u₀(x; μ)`.
    pub fn initial(&self, x: &[f64], mu: &[f64], out: &mut [f64]) {
        match self {
            PdeProblem::Advection => out[0] = ADVECTION_U0.apply(x[0]),
            PdeProblem::Burgers1d => {
                let s = x[0] - PI / 10.0;
                out[0] = BURGERS1D_BASE + BURGERS1D_BUMP * (-(14.0 * PI).powi(2) * s.powi(4)).exp();
            }
            PdeProblem::Burgers2d => {
                let r2 = (x[0] - PI / 10.0).powi(2) + (x[1] - PI / 10.0).powi(2);
                let v = (-(14.0 * PI).powi(2) * r2 * r2).exp();
                out[0] = v;
                out[1] = v;
            }
            PdeProblem::Vlasov => {
                let s = -0.2 + mu[0];
                out[0] = (-100.0 * ((x[0] + s).powi(2) + (x[1] + s).powi(2))).exp();
            }
            PdeProblem::Rde => {
                out[0] = 0.4 * (-2.25 * (x[0] - PI).powi(2)).exp() + 1.0;
                out[1] = 0.75;
            }
        }
    }

    /// `f(x, u, ∂u, ∂²u; μ)` at one point.
    #[inline]
    pub fn local_rhs(&self, x: &[f64], mu: &[f64], s: &Local, out: &mut [f64]) {
        let m = mu[0];
        match self {
            PdeProblem::Advection => out[0] = -m * s.du[0][0],
            PdeProblem::Burgers1d => out[0] = -s.u[0] * s.du[0][0] + m * s.d2u[0][0],
            PdeProblem::Burgers2d => {
                let (u, v) = (s.u[0], s.u[1]);
                for f in 0..2 {
                    out[f] = -u * s.du[f][0] - v * s.du[f][1] + m * (s.d2u[f][0] + s.d2u[f][1]);
                }
            }
            PdeProblem::Vlasov => out[0] = -x[1] * s.du[0][0] + vlasov_dphi(x[0]) * s.du[0][1],
            PdeProblem::Rde => {
                let c = &RDE;
                let (eta, lam) = (s.u[0], s.u[1]);
                let w = (1.0 - lam) * c.omega(eta);
                out[0] = -eta * s.du[0][0] + c.nu * s.d2u[0][0] + w + c.xi(eta);
                out[1] = c.nu * s.d2u[1][0] + w - c.beta(eta, m) * lam;
            }
        }
    }

    /// Initial fields sampled on `grid`, laid out field-major.
    pub fn initial_grid(&self, grid: &Grid, mu: &[f64]) -> Vec<f64> {
        let n = grid.len();
        let nf = self.n_fields();
        let mut u = vec![0.0; nf * n];
        let mut x = [0.0; MAX_DIM];
        let mut v = [0.0; MAX_FIELDS];
        for i in 0..n {
            grid.point(i, &mut x);
            self.initial(&x[..grid.dim()], mu, &mut v);
            for f in 0..nf {
                u[f * n + i] = v[f];
            }
        }
        u
    }

    /// Method-of-lines right-hand side with fourth-order periodic stencils.
    pub fn rhs_grid(&self, grid: &Grid, mu: &[f64], u: &[f64], out: &mut [f64]) {
        let n = grid.len();
        let nf = self.n_fields();
        let d = grid.dim();
        let mut du = vec![0.0; nf * d * n];
        let mut d2u = vec![0.0; if self.second_order() { nf * d * n } else { 0 }];
        for f in 0..nf {
            for k in 0..d {
                let o = (f * d + k) * n;
                d1(grid, &u[f * n..(f + 1) * n], k, &mut du[o..o + n]);
                if self.second_order() {
                    d2(grid, &u[f * n..(f + 1) * n], k, &mut d2u[o..o + n]);
                }
            }
        }
        let mut x = [0.0; MAX_DIM];
        let mut s = Local::default();
        let mut r = [0.0; MAX_FIELDS];
        for i in 0..n {
            grid.point(i, &mut x);
            for f in 0..nf {
                s.u[f] = u[f * n + i];
                for k in 0..d {
                    let o = (f * d + k) * n + i;
                    s.du[f][k] = du[o];
                    if self.second_order() {
                        s.d2u[f][k] = d2u[o];
                    }
                }
            }
            self.local_rhs(&x[..d], mu, &s, &mut r);
            for f in 0..nf {
                out[f * n + i] = r[f];
            }
        }
    }

    /// Jacobian structure of [`PdeProblem::rhs_grid`]: every field at a point
    /// couples to every field on the axis-aligned stencil cross.
    pub fn pattern(&self, grid: &Grid) -> Pattern {
        let n = grid.len();
        let nf = self.n_fields();
        let mut points = Vec::with_capacity(n);
        for i in 0..n {
            let mut cols = vec![i];
            for k in 0..grid.dim() {
                for o in -STENCIL_RADIUS..=STENCIL_RADIUS {
                    if o != 0 {
                        cols.push(grid.shift(i, k, o));
                    }
                }
            }
            points.push(cols);
        }
        let mut rows = Vec::with_capacity(nf * n);
        for _ in 0..nf {
            for cols in &points {
                let mut r = Vec::with_capacity(nf * cols.len());
                for g in 0..nf {
                    r.extend(cols.iter().map(|&c| g * n + c));
                }
                rows.push(r);
            }
        }
        Pattern::from_rows(rows)
    }
}

/// A problem discretized on a grid at fixed `μ`, as an ODE system.
pub struct Fom<'a> {
    pub problem: PdeProblem,
    pub grid: &'a Grid,
    pub mu: Vec<f64>,
}

impl OdeSystem for Fom<'_> {
    fn dim(&self) -> usize {
        self.problem.n_fields() * self.grid.len()
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        self.problem.rhs_grid(self.grid, &self.mu, y, dy);
        Ok(())
    }

    fn sparsity(&self) -> Option<Pattern> {
        Some(self.problem.pattern(self.grid))
    }
}

/// Right-hand side of the two-dimensional Burgers system on a grid.
pub fn burgers2d_rhs(u: &[f64], v: &[f64], mu: f64, grid: &Grid) -> (Vec<f64>, Vec<f64>) {
    let n = grid.len();
    let mut y = u.to_vec();
    y.extend_from_slice(v);
    let mut out = vec![0.0; 2 * n];
    PdeProblem::Burgers2d.rhs_grid(grid, &[mu], &y, &mut out);
    let dv = out.split_off(n);
    (out, dv)
}

pub fn vlasov_rhs(u: &[f64], mu: f64, grid: &Grid) -> Vec<f64> {
    let mut out = vec![0.0; u.len()];
    PdeProblem::Vlasov.rhs_grid(grid, &[mu], u, &mut out);
    out
}

pub fn rde_rhs(eta: &[f64], lambda: &[f64], mu: f64, grid: &Grid) -> (Vec<f64>, Vec<f64>) {
    let n = grid.len();
    let mut y = eta.to_vec();
    y.extend_from_slice(lambda);
    let mut out = vec![0.0; 2 * n];
    PdeProblem::Rde.rhs_grid(grid, &[mu], &y, &mut out);
    let dl = out.split_off(n);
    (out, dl)
}

/// `u₀((x − tμ) mod 1)` for the advection problem.
pub fn advection_exact(u0: impl Fn(f64) -> f64, t: f64, mu: f64, x: f64) -> f64 {
    u0((x - t * mu).rem_euclid(1.0))
}
