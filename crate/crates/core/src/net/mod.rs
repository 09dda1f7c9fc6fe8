//! Continuous low-rank adaptive networks: the reduced model `û(x; θ, φ)` and
//! the hyper-network `φ = h(t, μ; ψ)` that produces its latent state.

mod layers;
mod params;

pub use layers::{Activation, CoLoRALayer, LatentMode, PeriodicLayer, MAX_RANK};
pub use params::{ParamEntry, ParamStore};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::autodiff::{LatentFunction, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use layers::{colora_apply, periodic_apply};

fn default_depth() -> usize {
    8
}
fn default_width() -> usize {
    25
}
fn default_rank() -> usize {
    3
}
fn default_hyper_depth() -> usize {
    3
}
fn default_hyper_width() -> usize {
    15
}
fn default_true() -> bool {
    true
}
fn default_period() -> f64 {
    1.0
}
fn default_one() -> usize {
    1
}

/// Shape of a reduced network and its hyper-network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    /// Spatial dimension.
    pub input_dim: usize,
    /// Number of field components.
    #[serde(default = "default_one")]
    pub output_dim: usize,
    /// Layer count including the periodic embedding.
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default = "default_rank")]
    pub rank: usize,
    pub latent_dim: usize,
    #[serde(default)]
    pub mode: LatentMode,
    #[serde(default = "default_true")]
    pub periodic: bool,
    /// Period of the embedding in normalized coordinates.
    #[serde(default = "default_period")]
    pub period: f64,
    #[serde(default = "default_hyper_depth")]
    pub hyper_depth: usize,
    #[serde(default = "default_hyper_width")]
    pub hyper_width: usize,
    /// Number of physical parameters fed to the hyper-network next to `t`.
    #[serde(default = "default_one")]
    pub n_mu: usize,
}

impl ArchConfig {
    pub fn new(input_dim: usize, latent_dim: usize, mode: LatentMode) -> Self {
        ArchConfig {
            input_dim,
            output_dim: 1,
            depth: default_depth(),
            width: default_width(),
            rank: default_rank(),
            latent_dim,
            mode,
            periodic: true,
            period: 1.0,
            hyper_depth: default_hyper_depth(),
            hyper_width: default_hyper_width(),
            n_mu: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::config("input and output dimensions must be positive"));
        }
        if self.depth < 2 || self.width == 0 || self.hyper_depth < 1 || self.hyper_width == 0 {
            return Err(Error::config("network depth and width must be positive"));
        }
        if self.latent_dim == 0 {
            return Err(Error::config("latent dimension must be positive"));
        }
        if self.rank == 0 || self.rank > MAX_RANK {
            return Err(Error::config(format!("rank must be in 1..={MAX_RANK}")));
        }
        if !(self.period > 0.0) {
            return Err(Error::config("period must be positive"));
        }
        let cap = self.latent_capacity();
        if self.latent_dim > cap {
            return Err(Error::config(format!(
                "latent dimension {} exceeds the {} gains this architecture can carry",
                self.latent_dim, cap
            )));
        }
        Ok(())
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let n = self.depth - 1;
        let first_in = if self.periodic { self.width } else { self.input_dim };
        (0..n)
            .map(|i| {
                let d = if i == 0 { first_in } else { self.width };
                let o = if i + 1 == n { self.output_dim } else { self.width };
                (d, o)
            })
            .collect()
    }

    /// Largest latent dimension supported by the layer stack.
    pub fn latent_capacity(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|&(d, o)| match self.mode {
                LatentMode::ScalarAlpha => 1,
                LatentMode::DiagAlpha => self.rank.min(d).min(o),
            })
            .sum()
    }
}

/// Offsets of one layer's blocks inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Zero for a plain affine layer.
    pub rank: usize,
    pub latent_offset: usize,
    pub latent_count: usize,
    pub activation: Option<Activation>,
    w: usize,
    b: usize,
    a: usize,
    bm: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicSpec {
    pub width: usize,
    pub period: f64,
    a: usize,
    c: usize,
    b: usize,
}

/// The reduced network `û(x; θ, φ)`, innermost layer first. Parameters live
/// in an external flat vector; this type stores only the layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ColoraNet {
    pub input_dim: usize,
    pub output_dim: usize,
    pub latent_dim: usize,
    pub mode: LatentMode,
    pub periodic: Option<PeriodicSpec>,
    pub layers: Vec<LayerSpec>,
    pub hidden_activation: Activation,
}

impl ColoraNet {
    fn build(arch: &ArchConfig, store: &mut ParamStore) -> Self {
        let periodic = arch.periodic.then(|| {
            let w = arch.width;
            PeriodicSpec {
                width: w,
                period: arch.period,
                a: store.push("net.p.a", 1, w),
                c: store.push("net.p.c", 1, w),
                b: store.push("net.p.b", 1, w),
            }
        });
        let dims = arch.layer_dims();
        let n = dims.len();
        let mut remaining = arch.latent_dim;
        let mut offset = 0;
        let mut layers = Vec::with_capacity(n);
        for (i, &(d, o)) in dims.iter().enumerate() {
            let (rank, count) = if remaining == 0 {
                (0, 0)
            } else {
                match arch.mode {
                    LatentMode::ScalarAlpha => (arch.rank.min(d).min(o), 1),
                    LatentMode::DiagAlpha => {
                        let r = arch.rank.min(d).min(o).min(remaining);
                        (r, r)
                    }
                }
            };
            let w = store.push(format!("net.l{i}.W"), o, d);
            let b = store.push(format!("net.l{i}.b"), 1, o);
            let (a, bm) = if rank > 0 {
                (
                    store.push(format!("net.l{i}.A"), o, rank),
                    store.push(format!("net.l{i}.B"), rank, d),
                )
            } else {
                (0, 0)
            };
            layers.push(LayerSpec {
                in_dim: d,
                out_dim: o,
                rank,
                latent_offset: offset,
                latent_count: count,
                activation: (i + 1 < n).then_some(Activation::Swish),
                w,
                b,
                a,
                bm,
            });
            offset += count;
            remaining -= count;
        }
        ColoraNet {
            input_dim: arch.input_dim,
            output_dim: arch.output_dim,
            latent_dim: arch.latent_dim,
            mode: arch.mode,
            periodic,
            layers,
            hidden_activation: Activation::Swish,
        }
    }

    fn max_width(&self) -> usize {
        let p = self.periodic.as_ref().map_or(0, |p| p.width);
        self.layers
            .iter()
            .map(|l| l.in_dim.max(l.out_dim))
            .max()
            .unwrap_or(0)
            .max(p)
            .max(self.input_dim)
    }

    /// Forward pass at one normalized spatial point.
    pub fn forward<T: Real>(&self, params: &[f64], x: &[T], phi: &[T], out: &mut [T]) {
        let m = self.max_width();
        let mut cur = vec![T::zero(); m];
        let mut next = vec![T::zero(); m];
        let mut width = match &self.periodic {
            Some(p) => {
                periodic_apply(
                    &params[p.a..p.a + p.width],
                    &params[p.c..p.c + p.width],
                    &params[p.b..p.b + p.width],
                    p.period,
                    x,
                    &mut cur[..p.width],
                );
                for v in &mut cur[..p.width] {
                    *v = self.hidden_activation.apply(*v);
                }
                p.width
            }
            None => {
                cur[..x.len()].copy_from_slice(x);
                x.len()
            }
        };
        for l in &self.layers {
            debug_assert_eq!(width, l.in_dim);
            let (d, o, r) = (l.in_dim, l.out_dim, l.rank);
            colora_apply(
                &params[l.w..l.w + o * d],
                &params[l.b..l.b + o],
                &params[l.a..l.a + o * r],
                &params[l.bm..l.bm + r * d],
                o,
                d,
                r,
                &cur[..d],
                &phi[l.latent_offset..l.latent_offset + l.latent_count],
                &mut next[..o],
            );
            if let Some(act) = l.activation {
                for v in &mut next[..o] {
                    *v = act.apply(*v);
                }
            }
            std::mem::swap(&mut cur, &mut next);
            width = o;
        }
        out.copy_from_slice(&cur[..width]);
    }

    /// Batched forward pass on a tape. `x` is `B×d` (normalized), `phi` is
    /// `B×q` and the result is `B×n_out`.
    pub fn forward_tape(&self, tape: &mut Tape, params: Var, x: Var, phi: Var) -> Var {
        let mut h = match &self.periodic {
            Some(p) => {
                let a = tape.view(params, p.a, 1, p.width);
                let c = tape.view(params, p.c, 1, p.width);
                let b = tape.view(params, p.b, 1, p.width);
                let scale = 2.0 * std::f64::consts::PI / p.period;
                let mut acc = None;
                for k in 0..self.input_dim {
                    let xk = tape.slice_cols(x, k, 1);
                    let xs = tape.scale(xk, scale);
                    let arg = tape.outer_add(xs, c);
                    let cs = tape.cos(arg);
                    let ac = tape.mul_row(cs, a);
                    let term = tape.add_row(ac, b);
                    acc = Some(match acc {
                        None => term,
                        Some(s) => tape.add(s, term),
                    });
                }
                let pre = acc.expect("input dimension is positive");
                apply_tape(tape, self.hidden_activation, pre)
            }
            None => x,
        };
        for l in &self.layers {
            let w = tape.view(params, l.w, l.out_dim, l.in_dim);
            let b = tape.view(params, l.b, 1, l.out_dim);
            let wx = tape.matmul_t(h, w);
            let mut y = tape.add_row(wx, b);
            if l.rank > 0 && l.latent_count > 0 {
                let a = tape.view(params, l.a, l.out_dim, l.rank);
                let bm = tape.view(params, l.bm, l.rank, l.in_dim);
                let z = tape.matmul_t(h, bm);
                let alpha = tape.slice_cols(phi, l.latent_offset, l.latent_count);
                let za = if l.latent_count == 1 {
                    tape.mul_col(z, alpha)
                } else {
                    tape.mul(z, alpha)
                };
                let up = tape.matmul_t(za, a);
                y = tape.add(y, up);
            }
            h = match l.activation {
                Some(act) => apply_tape(tape, act, y),
                None => y,
            };
        }
        h
    }

    /// The `i`-th layer as a standalone [`CoLoRALayer`].
    pub fn layer(&self, params: &[f64], i: usize) -> Result<CoLoRALayer> {
        let l = self
            .layers
            .get(i)
            .ok_or_else(|| Error::invalid(format!("no layer {i}")))?;
        let (d, o, r) = (l.in_dim, l.out_dim, l.rank);
        let mode = if l.latent_count == 1 { LatentMode::ScalarAlpha } else { LatentMode::DiagAlpha };
        CoLoRALayer::new(
            Matrix::new(o, d, params[l.w..l.w + o * d].to_vec())?,
            Matrix::new(o, r, params[l.a..l.a + o * r].to_vec())?,
            Matrix::new(r, d, params[l.bm..l.bm + r * d].to_vec())?,
            params[l.b..l.b + o].to_vec(),
            mode,
        )
    }

    pub fn periodic_layer(&self, params: &[f64]) -> Option<PeriodicLayer> {
        self.periodic.as_ref().map(|p| PeriodicLayer {
            a: params[p.a..p.a + p.width].to_vec(),
            c: params[p.c..p.c + p.width].to_vec(),
            b: params[p.b..p.b + p.width].to_vec(),
            period: p.period,
        })
    }
}

fn apply_tape(tape: &mut Tape, act: Activation, x: Var) -> Var {
    match act {
        Activation::Swish => tape.swish(x),
        Activation::Identity => x,
        Activation::Gaussian { center, width } => {
            let s = tape.add_const(x, -center);
            let sq = tape.powi(s, 2);
            let e = tape.scale(sq, -1.0 / (width * width));
            tape.exp(e)
        }
        Activation::Sine { period } => {
            let s = tape.scale(x, 2.0 * std::f64::consts::PI / period);
            tape.sin(s)
        }
    }
}

/// Dense feed-forward map `(t, μ) ↦ φ` with swish hidden layers.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperNet {
    pub input_dim: usize,
    pub output_dim: usize,
    layers: Vec<LayerSpec>,
}

impl HyperNet {
    fn build(arch: &ArchConfig, store: &mut ParamStore) -> Self {
        let n = arch.hyper_depth;
        let input_dim = 1 + arch.n_mu;
        let layers = (0..n)
            .map(|i| {
                let d = if i == 0 { input_dim } else { arch.hyper_width };
                let o = if i + 1 == n { arch.latent_dim } else { arch.hyper_width };
                LayerSpec {
                    in_dim: d,
                    out_dim: o,
                    rank: 0,
                    latent_offset: 0,
                    latent_count: 0,
                    activation: (i + 1 < n).then_some(Activation::Swish),
                    w: store.push(format!("hyper.l{i}.W"), o, d),
                    b: store.push(format!("hyper.l{i}.b"), 1, o),
                    a: 0,
                    bm: 0,
                }
            })
            .collect();
        HyperNet {
            input_dim,
            output_dim: arch.latent_dim,
            layers,
        }
    }

    /// Evaluates on already-normalized inputs.
    pub fn forward(&self, params: &[f64], input: &[f64]) -> Vec<f64> {
        let mut cur = input.to_vec();
        for l in &self.layers {
            let (d, o) = (l.in_dim, l.out_dim);
            let mut next = vec![0.0; o];
            colora_apply::<f64>(
                &params[l.w..l.w + o * d],
                &params[l.b..l.b + o],
                &[],
                &[],
                o,
                d,
                0,
                &cur,
                &[],
                &mut next,
            );
            if let Some(act) = l.activation {
                next.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            cur = next;
        }
        cur
    }

    /// Batched forward on a tape: `P×(1+n_μ)` inputs to `P×q` latents.
    pub fn forward_tape(&self, tape: &mut Tape, params: Var, input: Var) -> Var {
        let mut h = input;
        for l in &self.layers {
            let w = tape.view(params, l.w, l.out_dim, l.in_dim);
            let b = tape.view(params, l.b, 1, l.out_dim);
            let wx = tape.matmul_t(h, w);
            let y = tape.add_row(wx, b);
            h = match l.activation {
                Some(act) => apply_tape(tape, act, y),
                None => y,
            };
        }
        h
    }
}

/// Affine input scalings: `(t, μ)` to zero mean and unit standard deviation,
/// `x` from its domain box onto the unit box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub t_mean: f64,
    pub t_std: f64,
    pub mu_mean: Vec<f64>,
    pub mu_std: Vec<f64>,
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
}

fn mean_std(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count().max(1) as f64;
    let mean = v.clone().sum::<f64>() / n;
    let var = v.map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 0.0 { std } else { 1.0 })
}

impl Normalizer {
    pub fn identity(input_dim: usize, n_mu: usize) -> Self {
        Normalizer {
            t_mean: 0.0,
            t_std: 1.0,
            mu_mean: vec![0.0; n_mu],
            mu_std: vec![1.0; n_mu],
            x_lo: vec![0.0; input_dim],
            x_hi: vec![1.0; input_dim],
        }
    }

    /// Statistics over a time grid and a set of parameter vectors.
    pub fn fit(times: &[f64], mus: &[Vec<f64>], x_lo: Vec<f64>, x_hi: Vec<f64>) -> Result<Self> {
        if times.is_empty() || mus.is_empty() {
            return Err(Error::invalid("normalizer needs at least one time and one parameter"));
        }
        if x_lo.len() != x_hi.len() || x_lo.iter().zip(&x_hi).any(|(l, h)| !(h > l)) {
            return Err(Error::invalid("spatial bounds must satisfy lo < hi"));
        }
        let n_mu = mus[0].len();
        if mus.iter().any(|m| m.len() != n_mu) {
            return Err(Error::dims("parameter vectors differ in length"));
        }
        let (t_mean, t_std) = mean_std(times.iter().copied());
        let (mu_mean, mu_std) = (0..n_mu).map(|k| mean_std(mus.iter().map(move |m| m[k]))).unzip();
        Ok(Normalizer {
            t_mean,
            t_std,
            mu_mean,
            mu_std,
            x_lo,
            x_hi,
        })
    }

    pub fn hyper_input(&self, t: f64, mu: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + mu.len());
        v.push((t - self.t_mean) / self.t_std);
        v.extend(
            mu.iter()
                .zip(self.mu_mean.iter().zip(&self.mu_std))
                .map(|(m, (a, s))| (m - a) / s),
        );
        v
    }

    /// Inverse of [`Normalizer::hyper_input`].
    pub fn hyper_output(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let t = z[0] * self.t_std + self.t_mean;
        let mu = z[1..]
            .iter()
            .zip(self.mu_mean.iter().zip(&self.mu_std))
            .map(|(v, (a, s))| v * s + a)
            .collect();
        (t, mu)
    }

    #[inline]
    pub fn x<T: Real>(&self, x: &[T], out: &mut [T]) {
        for (k, (xi, o)) in x.iter().zip(out.iter_mut()).enumerate() {
            let s = 1.0 / (self.x_hi[k] - self.x_lo[k]);
            *o = *xi * s + (-self.x_lo[k] * s);
        }
    }
}

/// How the latent state is obtained from `(t, μ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Architecture {
    /// Learned reduced network plus hyper-network.
    Colora(ArchConfig),
    /// Hand-built network that transports `u0` exactly; `φ = −t μ`.
    AdvectionExact { u0: Activation },
}

/// A reduced network together with its latent source, parameters and input
/// normalization.
#[derive(Clone, Debug)]
pub struct Model {
    pub arch: Architecture,
    pub net: ColoraNet,
    pub hyper: Option<HyperNet>,
    pub params: ParamStore,
    pub normalizer: Normalizer,
}

/// Draws initial parameters: `W` and hyper-network weights from
/// `N(0, 1/fan_in)`, `A` from `N(0, 1/√fan_in)`, `B` and biases zero, the
/// periodic amplitudes from `N(0, 1)` and phases uniformly on `[0, 2π)`.
pub fn init_params(arch: &ArchConfig, seed: u64) -> Result<(ColoraNet, HyperNet, ParamStore)> {
    arch.validate()?;
    let mut store = ParamStore::new();
    let net = ColoraNet::build(arch, &mut store);
    let hyper = HyperNet::build(arch, &mut store);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let entries = store.entries().to_vec();
    for e in entries {
        let fan_in = e.cols as f64;
        let slot = store.get_mut(&e.name).expect("entry exists");
        let last = e.name.rsplit('.').next().unwrap_or("");
        match last {
            "W" => slot
                .iter_mut()
                .for_each(|v| *v = std_normal.sample(&mut rng) / fan_in.sqrt()),
            "A" => slot
                .iter_mut()
                .for_each(|v| *v = std_normal.sample(&mut rng) / fan_in.sqrt().sqrt()),
            "a" => slot.iter_mut().for_each(|v| *v = std_normal.sample(&mut rng)),
            "c" => {
                let u = Uniform::new(0.0, 2.0 * std::f64::consts::PI);
                slot.iter_mut().for_each(|v| *v = u.sample(&mut rng));
            }
            _ => {}
        }
    }
    Ok((net, hyper, store))
}

impl Model {
    /// Freshly initialized learned model.
    pub fn new(arch: ArchConfig, normalizer: Normalizer, seed: u64) -> Result<Self> {
        let (net, hyper, params) = init_params(&arch, seed)?;
        Self::check_normalizer(&arch, &normalizer)?;
        Ok(Model {
            arch: Architecture::Colora(arch),
            net,
            hyper: Some(hyper),
            params,
            normalizer,
        })
    }

    fn check_normalizer(arch: &ArchConfig, n: &Normalizer) -> Result<()> {
        if n.x_lo.len() != arch.input_dim || n.mu_mean.len() != arch.n_mu {
            return Err(Error::dims("normalizer does not match the architecture"));
        }
        Ok(())
    }

    /// Rebuilds a model from its description and a flat parameter vector.
    pub fn from_parts(arch: Architecture, values: &[f64], normalizer: Normalizer) -> Result<Self> {
        let mut model = match &arch {
            Architecture::Colora(a) => {
                a.validate()?;
                Self::check_normalizer(a, &normalizer)?;
                let mut params = ParamStore::new();
                let net = ColoraNet::build(a, &mut params);
                let hyper = HyperNet::build(a, &mut params);
                Model {
                    arch: arch.clone(),
                    net,
                    hyper: Some(hyper),
                    params,
                    normalizer,
                }
            }
            Architecture::AdvectionExact { u0 } => build_advection_net(*u0),
        };
        model.params.load(values)?;
        Ok(model)
    }

    pub fn latent_dim(&self) -> usize {
        self.net.latent_dim
    }

    /// `φ(t; μ)`.
    pub fn latent(&self, t: f64, mu: &[f64]) -> Vec<f64> {
        match (&self.arch, &self.hyper) {
            (Architecture::AdvectionExact { .. }, _) => vec![-t * mu[0]],
            (_, Some(h)) => h.forward(self.params.data(), &self.normalizer.hyper_input(t, mu)),
            (_, None) => unreachable!("learned models carry a hyper-network"),
        }
    }

    /// Field values at every point of `xs` (`N×d`, physical coordinates) for
    /// one latent state; returns `N×n_out`.
    pub fn field(&self, xs: &Matrix, phi: &[f64]) -> Result<Matrix> {
        if xs.cols() != self.net.input_dim || phi.len() != self.latent_dim() {
            return Err(Error::dims("point or latent dimension mismatch"));
        }
        let n = xs.rows();
        let mut xn = Matrix::zeros(n, xs.cols());
        for i in 0..n {
            self.normalizer.x(xs.row(i), xn.row_mut(i));
        }
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::row_vector(self.params.data().to_vec()));
        let xv = tape.constant(Tensor::new(n, xs.cols(), xn.into_data()));
        let q = phi.len();
        let mut rows = Vec::with_capacity(n * q);
        for _ in 0..n {
            rows.extend_from_slice(phi);
        }
        let ph = tape.constant(Tensor::new(n, q, rows));
        let out = self.net.forward_tape(&mut tape, p, xv, ph);
        let t = tape.value(out);
        Matrix::new(t.rows, t.cols, t.data.clone())
    }
}

impl LatentFunction for Model {
    fn input_dim(&self) -> usize {
        self.net.input_dim
    }

    fn latent_dim(&self) -> usize {
        self.net.latent_dim
    }

    fn output_dim(&self) -> usize {
        self.net.output_dim
    }

    fn eval_generic<T: Real>(&self, x: &[T], phi: &[T], out: &mut [T]) {
        let mut xn = [T::zero(); 4];
        let d = x.len();
        assert!(d <= 4, "at most four spatial dimensions");
        self.normalizer.x(x, &mut xn[..d]);
        self.net.forward(self.params.data(), &xn[..d], phi, out);
    }
}

/// `û(x; φ)` at one physical point.
pub fn net_eval(model: &Model, x: &[f64], phi: &[f64]) -> Result<Vec<f64>> {
    if x.len() != model.input_dim() || phi.len() != model.latent_dim() {
        return Err(Error::dims("point or latent dimension mismatch"));
    }
    Ok(model.eval(x, phi))
}

/// `φ = h(t, μ)`.
pub fn hyper_eval(model: &Model, t: f64, mu: &[f64]) -> Result<Vec<f64>> {
    if mu.len() != model.normalizer.mu_mean.len() {
        return Err(Error::dims("parameter dimension mismatch"));
    }
    Ok(model.latent(t, mu))
}

pub fn colora_forward<T: Real>(layer: &CoLoRALayer, x: &[T], alpha: &[T]) -> Result<Vec<T>> {
    layer.forward(x, alpha)
}

pub fn periodic_forward<T: Real>(layer: &PeriodicLayer, x: &[T]) -> Vec<T> {
    layer.forward(x)
}

/// Three-layer network with one scalar latent that represents
/// `u0(x + φ)` exactly; with `φ = −tμ` it is the advected profile.
pub fn build_advection_net(u0: Activation) -> Model {
    let mut store = ParamStore::new();
    let mut spec = |name: &str, d: usize, o: usize, r: usize, act: Option<Activation>, latent: usize| {
        let w = store.push(format!("net.{name}.W"), o, d);
        let b = store.push(format!("net.{name}.b"), 1, o);
        let (a, bm) = if r > 0 {
            (
                store.push(format!("net.{name}.A"), o, r),
                store.push(format!("net.{name}.B"), r, d),
            )
        } else {
            (0, 0)
        };
        LayerSpec {
            in_dim: d,
            out_dim: o,
            rank: r,
            latent_offset: 0,
            latent_count: latent,
            activation: act,
            w,
            b,
            a,
            bm,
        }
    };
    let layers = vec![
        spec("l0", 1, 2, 0, Some(Activation::Identity), 0),
        spec("l1", 2, 1, 1, Some(u0), 1),
        spec("l2", 1, 1, 0, None, 0),
    ];
    for (name, vals) in [
        ("net.l0.W", vec![1.0, 0.0]),
        ("net.l0.b", vec![0.0, 1.0]),
        ("net.l1.W", vec![1.0, 0.0]),
        ("net.l1.b", vec![0.0]),
        ("net.l1.A", vec![1.0]),
        ("net.l1.B", vec![0.0, 1.0]),
        ("net.l2.W", vec![1.0]),
        ("net.l2.b", vec![0.0]),
    ] {
        store.set(name, &vals).expect("layout built above");
    }
    Model {
        arch: Architecture::AdvectionExact { u0 },
        net: ColoraNet {
            input_dim: 1,
            output_dim: 1,
            latent_dim: 1,
            mode: LatentMode::ScalarAlpha,
            periodic: None,
            layers,
            hidden_activation: Activation::Identity,
        },
        hyper: None,
        params: store,
        normalizer: Normalizer::identity(1, 1),
    }
}
