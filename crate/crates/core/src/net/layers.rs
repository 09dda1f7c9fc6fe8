use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// How the latent entries of a CoLoRA layer scale its low-rank update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LatentMode {
    /// One gain `α` multiplies `AB`.
    ScalarAlpha,
    /// `A diag(α₁…α_r) B`.
    #[default]
    DiagAlpha,
}

/// Pointwise nonlinearity between layers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Activation {
    Swish,
    Identity,
    /// `exp(−((x − center)/width)²)`, used as a closed-form initial condition.
    Gaussian { center: f64, width: f64 },
    /// `sin(2π x / period)`.
    Sine { period: f64 },
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(&self, x: T) -> T {
        match *self {
            Activation::Swish => x.swish(),
            Activation::Identity => x,
            Activation::Gaussian { center, width } => {
                let s = (x + (-center)) * (1.0 / width);
                (s * s * -1.0).exp()
            }
            Activation::Sine { period } => (x * (2.0 * PI / period)).sin(),
        }
    }
}

/// `y = W x + b + A (α ⊙ (B x))` on raw parameter slices.
///
/// `w` is `n×d`, `a` is `n×r`, `bm` is `r×d` (all row-major), `alpha` holds 1
/// (scalar mode) or `r` gains. `r = 0` gives a plain affine layer.
#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn colora_apply<T: Real>(
    w: &[f64],
    bias: &[f64],
    a: &[f64],
    bm: &[f64],
    n: usize,
    d: usize,
    r: usize,
    x: &[T],
    alpha: &[T],
    out: &mut [T],
) {
    for i in 0..n {
        let row = &w[i * d..(i + 1) * d];
        let mut acc = T::cst(bias[i]);
        for (xj, wij) in x.iter().zip(row) {
            acc = xj.mul_add_f(*wij, acc);
        }
        out[i] = acc;
    }
    if r == 0 || alpha.is_empty() {
        return;
    }
    let mut z = [T::zero(); MAX_RANK];
    for k in 0..r {
        let row = &bm[k * d..(k + 1) * d];
        let mut acc = T::zero();
        for (xj, bkj) in x.iter().zip(row) {
            acc = xj.mul_add_f(*bkj, acc);
        }
        let g = if alpha.len() == 1 { alpha[0] } else { alpha[k] };
        z[k] = acc * g;
    }
    for i in 0..n {
        let row = &a[i * r..(i + 1) * r];
        let mut acc = out[i];
        for (zk, aik) in z[..r].iter().zip(row) {
            acc = zk.mul_add_f(*aik, acc);
        }
        out[i] = acc;
    }
}

/// Largest supported low-rank factor rank.
pub const MAX_RANK: usize = 16;

/// A standalone CoLoRA layer `C(x) = W x + α A B x + b`.
#[derive(Clone, Debug)]
pub struct CoLoRALayer {
    pub w: Matrix,
    pub a: Matrix,
    pub b_mat: Matrix,
    pub bias: Vec<f64>,
    pub mode: LatentMode,
}

impl CoLoRALayer {
    pub fn new(w: Matrix, a: Matrix, b_mat: Matrix, bias: Vec<f64>, mode: LatentMode) -> Result<Self> {
        let (n, d) = w.shape();
        let r = a.cols();
        if a.rows() != n || b_mat.shape() != (r, d) || bias.len() != n {
            return Err(Error::dims("CoLoRA layer factors do not match W"));
        }
        if r > n.min(d) || r > MAX_RANK {
            return Err(Error::invalid(format!("rank {r} exceeds min({n}, {d})")));
        }
        Ok(CoLoRALayer {
            w,
            a,
            b_mat,
            bias,
            mode,
        })
    }

    pub fn rank(&self) -> usize {
        self.a.cols()
    }

    /// Number of latent gains the layer consumes.
    pub fn latent_count(&self) -> usize {
        match self.mode {
            LatentMode::ScalarAlpha => 1,
            LatentMode::DiagAlpha => self.rank(),
        }
    }

    pub fn low_rank_update(&self) -> Matrix {
        self.a.matmul(&self.b_mat).expect("consistent factors")
    }

    pub fn forward<T: Real>(&self, x: &[T], alpha: &[T]) -> Result<Vec<T>> {
        if alpha.len() != self.latent_count() {
            return Err(Error::dims(format!(
                "layer takes {} gains, got {}",
                self.latent_count(),
                alpha.len()
            )));
        }
        if x.len() != self.w.cols() {
            return Err(Error::dims("input width differs from layer width"));
        }
        let (n, d) = self.w.shape();
        let mut out = vec![T::zero(); n];
        colora_apply(
            self.w.data(),
            &self.bias,
            self.a.data(),
            self.b_mat.data(),
            n,
            d,
            self.rank(),
            x,
            alpha,
            &mut out,
        );
        Ok(out)
    }
}

/// `P(x)_i = Σ_k [aᵢ cos(2π x_k / ω + cᵢ) + bᵢ]` on raw slices.
#[inline]
pub(crate) fn periodic_apply<T: Real>(a: &[f64], c: &[f64], b: &[f64], period: f64, x: &[T], out: &mut [T]) {
    let scale = 2.0 * PI / period;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = T::zero();
        for xk in x {
            acc = ((*xk * scale) + c[i]).cos().mul_add_f(a[i], acc) + b[i];
        }
        *o = acc;
    }
}

/// Periodic embedding of a spatial point into a feature vector. Each output
/// unit owns its own amplitude, phase and offset.
#[derive(Clone, Debug)]
pub struct PeriodicLayer {
    pub a: Vec<f64>,
    pub c: Vec<f64>,
    pub b: Vec<f64>,
    pub period: f64,
}

impl PeriodicLayer {
    pub fn width(&self) -> usize {
        self.a.len()
    }

    pub fn forward<T: Real>(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.width()];
        periodic_apply(&self.a, &self.c, &self.b, self.period, x, &mut out);
        out
    }
}
