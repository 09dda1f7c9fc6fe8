use serde::{Deserialize, Serialize};

use super::sparse::{bicgstab, Csr, Pattern};
use crate::error::{Error, Result};
use crate::linalg::{norm_inf, solve_dense, Matrix};

/// `ẏ = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;
    /// Nonzero structure of `∂f/∂y`, diagonal included. `None` means dense.
    fn sparsity(&self) -> Option<Pattern> {
        None
    }
}

/// Wraps a closure as an [`OdeSystem`].
pub struct FnSystem<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(f64, &[f64], &mut [f64])> OdeSystem for FnSystem<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        (self.f)(t, y, dy);
        Ok(())
    }
}

/// Time integration scheme and its step control.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Scheme {
    Rk4 { dt: f64 },
    Dopri5 { rtol: f64, atol: f64 },
    ImplicitEuler { dt: f64 },
}

impl Scheme {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Scheme::Rk4 { dt } | Scheme::ImplicitEuler { dt } => dt > 0.0 && dt.is_finite(),
            Scheme::Dopri5 { rtol, atol } => rtol > 0.0 && atol > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config("time step and tolerances must be positive"))
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Stats {
    pub steps: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub jacobians: usize,
    pub newton_iterations: usize,
}

/// States at the requested output times.
#[derive(Clone, Debug)]
pub struct Solution {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub stats: Stats,
}

/// Hooks into the adaptive integrator.
pub trait StepObserver {
    /// Called after every accepted step; may modify `y`. Return `true` if it
    /// did, so the integrator refreshes its cached derivative.
    fn accepted(&mut self, _t: f64, _y: &mut [f64]) -> Result<bool> {
        Ok(false)
    }
    /// Called on each state delivered at an output time; may modify it.
    fn output(&mut self, _t: f64, _y: &mut [f64]) -> Result<()> {
        Ok(())
    }
}

impl StepObserver for () {}

fn check_times(y0: &[f64], dim: usize, t_out: &[f64]) -> Result<()> {
    if y0.len() != dim {
        return Err(Error::dims("initial state length differs from system dimension"));
    }
    if t_out.is_empty() || t_out.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("output times must be strictly increasing"));
    }
    Ok(())
}

fn check_finite(t: f64, y: &[f64]) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("state became non-finite at t = {t}")))
    }
}

/// Classical fourth-order Runge–Kutta. Each output interval is split into
/// the fewest equal steps not exceeding `dt`.
pub fn rk4<S: OdeSystem + ?Sized>(sys: &S, y0: &[f64], t_out: &[f64], dt: f64) -> Result<Solution> {
    let n = sys.dim();
    check_times(y0, n, t_out)?;
    let mut y = y0.to_vec();
    let mut stats = Stats::default();
    let mut out = vec![y.clone()];
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for w in t_out.windows(2) {
        let steps = ((w[1] - w[0]) / dt - 1e-9).ceil().max(1.0) as usize;
        let h = (w[1] - w[0]) / steps as f64;
        for s in 0..steps {
            let t = w[0] + s as f64 * h;
            sys.rhs(t, &y, &mut k1)?;
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * h * k1[i];
            }
            sys.rhs(t + 0.5 * h, &tmp, &mut k2)?;
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * h * k2[i];
            }
            sys.rhs(t + 0.5 * h, &tmp, &mut k3)?;
            for i in 0..n {
                tmp[i] = y[i] + h * k3[i];
            }
            sys.rhs(t + h, &tmp, &mut k4)?;
            for i in 0..n {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            stats.steps += 1;
            stats.rhs_evals += 4;
        }
        check_finite(w[1], &y)?;
        out.push(y.clone());
    }
    Ok(Solution {
        t: t_out.to_vec(),
        y: out,
        stats,
    })
}

/// Options for [`dopri5`].
#[derive(Clone, Copy, Debug)]
pub struct Dopri5Options {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h0: Option<f64>,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Dopri5Options {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Dopri5Options {
            rtol,
            atol,
            h0: None,
            h_min: 1e-12,
            h_max: f64::INFINITY,
            max_steps: 1_000_000,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn err_norm(err: &[f64], y0: &[f64], y1: &[f64], rtol: f64, atol: f64) -> f64 {
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| (e / (atol + rtol * a.abs().max(b.abs()))).powi(2))
        .sum();
    (s / err.len().max(1) as f64).sqrt()
}

fn initial_step<S: OdeSystem + ?Sized>(sys: &S, t: f64, y: &[f64], f0: &[f64], o: &Dopri5Options) -> Result<f64> {
    let n = y.len();
    let sc: Vec<f64> = y.iter().map(|v| o.atol + o.rtol * v.abs()).collect();
    let nrm = |v: &[f64]| (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n.max(1) as f64).sqrt();
    let (d0, d1) = (nrm(y), nrm(f0));
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, f)| a + h0 * f).collect();
    let mut f1 = vec![0.0; n];
    sys.rhs(t + h0, &y1, &mut f1)?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = nrm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(o.h_max))
}

/// Dormand–Prince 5(4) with step-size control and fourth-order dense output.
pub fn dopri5<S: OdeSystem + ?Sized>(sys: &S, y0: &[f64], t_out: &[f64], opts: &Dopri5Options) -> Result<Solution> {
    dopri5_observed(sys, y0, t_out, opts, &mut ())
}

/// [`dopri5`] with an observer that sees (and may correct) every accepted
/// step and every output state.
pub fn dopri5_observed<S: OdeSystem + ?Sized>(
    sys: &S,
    y0: &[f64],
    t_out: &[f64],
    opts: &Dopri5Options,
    obs: &mut dyn StepObserver,
) -> Result<Solution> {
    let n = sys.dim();
    check_times(y0, n, t_out)?;
    let mut stats = Stats::default();
    let mut t = t_out[0];
    let t_end = *t_out.last().expect("nonempty");
    let mut y = y0.to_vec();
    let mut first = y.clone();
    obs.output(t, &mut first)?;
    let mut out = vec![first];
    if t_out.len() == 1 {
        return Ok(Solution {
            t: t_out.to_vec(),
            y: out,
            stats,
        });
    }
    let mut k = vec![vec![0.0; n]; 7];
    sys.rhs(t, &y, &mut k[0])?;
    stats.rhs_evals += 1;
    let mut h = match opts.h0 {
        Some(h) => h,
        None => {
            stats.rhs_evals += 1;
            initial_step(sys, t, &y, &k[0], opts)?
        }
    };
    let mut next_out = 1;
    let mut ytmp = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    let mut errv = vec![0.0; n];
    let mut rcont = vec![vec![0.0; n]; 5];
    let mut last_rejected = false;
    while next_out < t_out.len() {
        if stats.steps + stats.rejected >= opts.max_steps {
            return Err(Error::StepUnderflow { t, dt: h });
        }
        if h < opts.h_min {
            return Err(Error::StepUnderflow { t, dt: h });
        }
        let mut hit_end = false;
        if t + h >= t_end - 1e-14 * t_end.abs().max(1.0) {
            h = t_end - t;
            hit_end = true;
        }
        macro_rules! stage {
            ($dst:expr, $c:expr, [$($a:expr => $j:expr),*]) => {{
                for i in 0..n {
                    ytmp[i] = y[i] + h * (0.0 $(+ $a * k[$j][i])*);
                }
                let (_, rest) = k.split_at_mut($dst);
                sys.rhs(t + $c * h, &ytmp, &mut rest[0])?;
            }};
        }
        stage!(1, C2, [A21 => 0]);
        stage!(2, C3, [A31 => 0, A32 => 1]);
        stage!(3, C4, [A41 => 0, A42 => 1, A43 => 2]);
        stage!(4, C5, [A51 => 0, A52 => 1, A53 => 2, A54 => 3]);
        stage!(5, 1.0, [A61 => 0, A62 => 1, A63 => 2, A64 => 3, A65 => 4]);
        for i in 0..n {
            y1[i] = y[i] + h * (A71 * k[0][i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i] + A76 * k[5][i]);
        }
        sys.rhs(t + h, &y1, &mut k[6])?;
        stats.rhs_evals += 6;
        for i in 0..n {
            errv[i] = h * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
        }
        let err = err_norm(&errv, &y, &y1, opts.rtol, opts.atol);
        if !err.is_finite() {
            stats.rejected += 1;
            h *= 0.2;
            last_rejected = true;
            continue;
        }
        let fac = if err == 0.0 { 10.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 10.0) };
        if err > 1.0 {
            stats.rejected += 1;
            h *= fac.min(1.0);
            last_rejected = true;
            continue;
        }
        stats.steps += 1;
        for i in 0..n {
            let dy = y1[i] - y[i];
            let bspl = h * k[0][i] - dy;
            rcont[0][i] = y[i];
            rcont[1][i] = dy;
            rcont[2][i] = bspl;
            rcont[3][i] = dy - h * k[6][i] - bspl;
            rcont[4][i] = h
                * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i]);
        }
        let t_new = if hit_end { t_end } else { t + h };
        while next_out < t_out.len() && t_out[next_out] <= t_new + 1e-14 * t_new.abs().max(1.0) {
            let mut yo = if next_out + 1 == t_out.len() && hit_end {
                y1.clone()
            } else {
                let theta = (t_out[next_out] - t) / h;
                let th1 = 1.0 - theta;
                (0..n)
                    .map(|i| {
                        rcont[0][i]
                            + theta * (rcont[1][i] + th1 * (rcont[2][i] + theta * (rcont[3][i] + th1 * rcont[4][i])))
                    })
                    .collect()
            };
            obs.output(t_out[next_out], &mut yo)?;
            check_finite(t_out[next_out], &yo)?;
            out.push(yo);
            next_out += 1;
        }
        t = t_new;
        std::mem::swap(&mut y, &mut y1);
        if obs.accepted(t, &mut y)? {
            sys.rhs(t, &y, &mut k[0])?;
            stats.rhs_evals += 1;
        } else {
            let k7 = std::mem::take(&mut k[6]);
            k[6] = std::mem::replace(&mut k[0], k7);
        }
        let grow = if last_rejected { fac.min(1.0) } else { fac };
        last_rejected = false;
        h = (h * grow).min(opts.h_max);
    }
    Ok(Solution {
        t: t_out.to_vec(),
        y: out,
        stats,
    })
}

/// Options for the Newton iteration of [`implicit_euler`].
#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Relative tolerance of the inner BiCGSTAB solves.
    pub linear_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-10,
            max_iter: 25,
            linear_tol: 1e-12,
        }
    }
}

enum Jacobian {
    Dense(Matrix),
    Sparse(Csr),
}

impl Jacobian {
    /// `I − dt·J`.
    fn newton_matrix(&self, dt: f64) -> Jacobian {
        match self {
            Jacobian::Dense(j) => {
                let mut m = j.scale(-dt);
                for i in 0..j.rows() {
                    m.row_mut(i)[i] += 1.0;
                }
                Jacobian::Dense(m)
            }
            Jacobian::Sparse(j) => Jacobian::Sparse(j.shifted_identity(dt)),
        }
    }
}

/// Finite-difference Jacobian. With a pattern, columns of one colour are
/// perturbed together.
struct FdJacobian {
    pattern: Option<Pattern>,
    colors: Vec<Vec<usize>>,
    /// `(row, entry)` pairs filled by each colour.
    entries: Vec<Vec<(usize, usize)>>,
}

impl FdJacobian {
    fn new(pattern: Option<Pattern>, n: usize) -> Self {
        match pattern {
            Some(p) => {
                let color = p.color_columns();
                let nc = color.iter().copied().max().map_or(0, |c| c + 1);
                let mut colors = vec![Vec::new(); nc];
                for (j, &c) in color.iter().enumerate() {
                    colors[c].push(j);
                }
                let mut entries = vec![Vec::new(); nc];
                for i in 0..p.n {
                    for kk in p.row_ptr[i]..p.row_ptr[i + 1] {
                        entries[color[p.col_idx[kk]]].push((i, kk));
                    }
                }
                FdJacobian {
                    pattern: Some(p),
                    colors,
                    entries,
                }
            }
            None => FdJacobian {
                pattern: None,
                colors: (0..n).map(|j| vec![j]).collect(),
                entries: Vec::new(),
            },
        }
    }

    fn eval<S: OdeSystem + ?Sized>(&self, sys: &S, t: f64, y: &[f64], f0: &[f64], stats: &mut Stats) -> Result<Jacobian> {
        let n = y.len();
        let eps = f64::EPSILON.sqrt();
        let steps: Vec<f64> = y.iter().map(|v| eps * v.abs().max(1.0)).collect();
        let mut yp = y.to_vec();
        let mut fp = vec![0.0; n];
        stats.jacobians += 1;
        match &self.pattern {
            Some(p) => {
                let mut values = vec![0.0; p.nnz()];
                for (c, cols) in self.colors.iter().enumerate() {
                    for &j in cols {
                        yp[j] = y[j] + steps[j];
                    }
                    sys.rhs(t, &yp, &mut fp)?;
                    stats.rhs_evals += 1;
                    for &j in cols {
                        yp[j] = y[j];
                    }
                    for &(i, kk) in &self.entries[c] {
                        values[kk] = (fp[i] - f0[i]) / steps[p.col_idx[kk]];
                    }
                }
                Ok(Jacobian::Sparse(Csr {
                    pattern: p.clone(),
                    values,
                }))
            }
            None => {
                let mut m = Matrix::zeros(n, n);
                for j in 0..n {
                    yp[j] = y[j] + steps[j];
                    sys.rhs(t, &yp, &mut fp)?;
                    stats.rhs_evals += 1;
                    yp[j] = y[j];
                    for i in 0..n {
                        m.row_mut(i)[j] = (fp[i] - f0[i]) / steps[j];
                    }
                }
                Ok(Jacobian::Dense(m))
            }
        }
    }
}

/// Solves `M δ = r` for a Newton matrix `M`.
fn newton_solve(m: &Jacobian, r: &[f64], opts: &NewtonOptions) -> Result<Vec<f64>> {
    match m {
        Jacobian::Dense(m) => solve_dense(m, r),
        Jacobian::Sparse(m) => bicgstab(m, r, opts.linear_tol, 1000),
    }
}

/// Backward Euler with a fixed step. Each step solves
/// `z − y − dt f(t+dt, z) = 0` by simplified Newton: the finite-difference
/// Jacobian is kept across steps and refreshed only when the iteration
/// contracts slowly or a damped update (step halving) fails to reduce the
/// residual.
pub fn implicit_euler<S: OdeSystem + ?Sized>(
    sys: &S,
    y0: &[f64],
    t_out: &[f64],
    dt: f64,
    opts: &NewtonOptions,
) -> Result<Solution> {
    let n = sys.dim();
    check_times(y0, n, t_out)?;
    let fd = FdJacobian::new(sys.sparsity(), n);
    let mut stats = Stats::default();
    let mut y = y0.to_vec();
    let mut out = vec![y.clone()];
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut jac: Option<Jacobian> = None;
    let mut newton: Option<(f64, Jacobian)> = None;
    for w in t_out.windows(2) {
        let steps = ((w[1] - w[0]) / dt - 1e-9).ceil().max(1.0) as usize;
        let h = (w[1] - w[0]) / steps as f64;
        for s in 0..steps {
            let t1 = w[0] + (s + 1) as f64 * h;
            let mut z = y.clone();
            sys.rhs(t1, &z, &mut f)?;
            stats.rhs_evals += 1;
            let residual = |z: &[f64], fz: &[f64], g: &mut [f64]| {
                for i in 0..n {
                    g[i] = z[i] - y[i] - h * fz[i];
                }
                norm_inf(g)
            };
            let mut res = residual(&z, &f, &mut g);
            let mut it = 0;
            let mut fresh = false;
            while res >= opts.tol {
                if it >= opts.max_iter {
                    return Err(Error::NewtonDiverged {
                        t: t1,
                        residual: res,
                        iterations: it,
                    });
                }
                if jac.is_none() {
                    jac = Some(fd.eval(sys, t1, &z, &f, &mut stats)?);
                    newton = None;
                    fresh = true;
                }
                if newton.as_ref().map_or(true, |(hh, _)| *hh != h) {
                    newton = Some((h, jac.as_ref().expect("set above").newton_matrix(h)));
                }
                it += 1;
                let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
                let delta = newton_solve(&newton.as_ref().expect("set above").1, &rhs, opts)?;
                let mut lambda = 1.0;
                let mut accepted = false;
                for _ in 0..12 {
                    for i in 0..n {
                        trial[i] = z[i] + lambda * delta[i];
                    }
                    sys.rhs(t1, &trial, &mut f)?;
                    stats.rhs_evals += 1;
                    let r = residual(&trial, &f, &mut g);
                    if r.is_finite() && r < res {
                        std::mem::swap(&mut z, &mut trial);
                        let slow = r > 0.25 * res && r >= opts.tol;
                        res = r;
                        accepted = true;
                        if slow && !fresh {
                            jac = None;
                        }
                        break;
                    }
                    lambda *= 0.5;
                }
                if !accepted {
                    sys.rhs(t1, &z, &mut f)?;
                    stats.rhs_evals += 1;
                    res = residual(&z, &f, &mut g);
                    if !fresh {
                        jac = None;
                    }
                }
            }
            stats.newton_iterations += it;
            stats.steps += 1;
            y = z;
        }
        check_finite(w[1], &y)?;
        out.push(y.clone());
    }
    Ok(Solution {
        t: t_out.to_vec(),
        y: out,
        stats,
    })
}

/// Dispatches on `scheme`.
pub fn integrate_ode<S: OdeSystem + ?Sized>(sys: &S, y0: &[f64], t_out: &[f64], scheme: Scheme) -> Result<Solution> {
    scheme.validate()?;
    match scheme {
        Scheme::Rk4 { dt } => rk4(sys, y0, t_out, dt),
        Scheme::Dopri5 { rtol, atol } => dopri5(sys, y0, t_out, &Dopri5Options::new(rtol, atol)),
        Scheme::ImplicitEuler { dt } => implicit_euler(sys, y0, t_out, dt, &NewtonOptions::default()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(rate: f64) -> FnSystem<impl Fn(f64, &[f64], &mut [f64])> {
        FnSystem {
            dim: 1,
            f: move |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -rate * y[0],
        }
    }

    #[test]
    fn dopri5_exponential() {
        let s = dopri5(&decay(1.0), &[1.0], &[0.0, 0.5, 1.0], &Dopri5Options::new(1e-8, 1e-8)).unwrap();
        assert!((s.y[2][0] - (-1.0f64).exp()).abs() < 1e-7);
        assert!((s.y[1][0] - (-0.5f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn dopri5_dense_output_is_accurate() {
        let times: Vec<f64> = (0..=40).map(|k| k as f64 * 0.05).collect();
        let osc = FnSystem {
            dim: 2,
            f: |_t: f64, y: &[f64], dy: &mut [f64]| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
        };
        let s = dopri5(&osc, &[0.0, 1.0], &times, &Dopri5Options::new(1e-9, 1e-9)).unwrap();
        assert!(s.stats.steps < times.len());
        for (t, y) in times.iter().zip(&s.y) {
            assert!((y[0] - t.sin()).abs() < 1e-7, "t={t}");
        }
    }

    #[test]
    fn rk4_order() {
        let e = |dt: f64| (rk4(&decay(1.0), &[1.0], &[0.0, 1.0], dt).unwrap().y[1][0] - (-1.0f64).exp()).abs();
        let ratio = e(0.1) / e(0.05);
        assert!((14.0..=18.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn implicit_euler_is_stable_and_first_order() {
        let times: Vec<f64> = (0..=10).map(|k| k as f64 * 0.01).collect();
        let s = implicit_euler(&decay(1000.0), &[1.0], &times, 0.01, &NewtonOptions::default()).unwrap();
        for w in s.y.windows(2) {
            assert!(w[1][0] < w[0][0] && w[1][0] > 0.0);
        }
        let e = |dt: f64| {
            (implicit_euler(&decay(1.0), &[1.0], &[0.0, 1.0], dt, &NewtonOptions::default())
                .unwrap()
                .y[1][0]
                - (-1.0f64).exp())
            .abs()
        };
        let ratio = e(0.01) / e(0.005);
        assert!((1.8..=2.2).contains(&ratio), "{ratio}");
    }

    struct Diffusion {
        n: usize,
    }

    impl OdeSystem for Diffusion {
        fn dim(&self) -> usize {
            self.n
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
            let n = self.n;
            for i in 0..n {
                dy[i] = y[(i + 1) % n] - 2.0 * y[i] + y[(i + n - 1) % n] - y[i].powi(3);
            }
            Ok(())
        }
        fn sparsity(&self) -> Option<Pattern> {
            let n = self.n;
            Some(Pattern::from_rows((0..n).map(|i| vec![(i + n - 1) % n, i, (i + 1) % n]).collect()))
        }
    }

    struct DenseDiffusion(Diffusion);

    impl OdeSystem for DenseDiffusion {
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
            self.0.rhs(t, y, dy)
        }
    }

    #[test]
    fn sparse_and_dense_newton_agree() {
        let y0: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
        let t = [0.0, 0.5];
        let a = implicit_euler(&Diffusion { n: 12 }, &y0, &t, 0.05, &NewtonOptions::default()).unwrap();
        let b = implicit_euler(&DenseDiffusion(Diffusion { n: 12 }), &y0, &t, 0.05, &NewtonOptions::default()).unwrap();
        for (p, q) in a.y[1].iter().zip(&b.y[1]) {
            assert!((p - q).abs() < 1e-9);
        }
        assert!(a.stats.rhs_evals < b.stats.rhs_evals);
    }

    #[test]
    fn bad_times_rejected() {
        assert!(rk4(&decay(1.0), &[1.0], &[0.0, 0.0], 0.1).is_err());
        assert!(rk4(&decay(1.0), &[1.0, 2.0], &[0.0, 1.0], 0.1).is_err());
        assert!(Scheme::Rk4 { dt: 0.0 }.validate().is_err());
    }

    #[test]
    fn blow_up_is_reported() {
        let s = FnSystem {
            dim: 1,
            f: |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = y[0] * y[0],
        };
        assert!(dopri5(&s, &[1.0], &[0.0, 2.0], &Dopri5Options::new(1e-8, 1e-8)).is_err());
    }
}
