//! Differentiation machinery: a reverse-mode [`Tape`] for gradients of scalar
//! losses, forward-mode [`Dual`]/[`Dual2`] numbers for Jacobians with respect
//! to the latent state and for spatial derivatives of the network.

mod dual;
mod tape;

pub use dual::{swish3, Dual, Dual2, Real};
pub use tape::{Gradients, Op, Tape, Tensor, Var};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// A field `û(x; φ)` that can be evaluated in any [`Real`] arithmetic.
///
/// `x` has `input_dim` entries, `phi` has `latent_dim` entries and `out`
/// receives `output_dim` field values.
pub trait LatentFunction {
    fn input_dim(&self) -> usize;
    fn latent_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn eval_generic<T: Real>(&self, x: &[T], phi: &[T], out: &mut [T]);

    fn eval(&self, x: &[f64], phi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.output_dim()];
        self.eval_generic(x, phi, &mut out);
        out
    }
}

/// Value and gradient of a scalar function recorded on a tape. `f` receives
/// the flat parameter vector as a `1×n` leaf.
pub fn value_and_grad<F>(f: F, params: &[f64]) -> (f64, Vec<f64>)
where
    F: FnOnce(&mut Tape, Var) -> Var,
{
    let mut tape = Tape::new();
    let p = tape.leaf(Tensor::row_vector(params.to_vec()));
    let out = f(&mut tape, p);
    let value = tape.scalar(out);
    let g = tape.backward(out).wrt(&tape, p);
    (value, g.data)
}

pub fn grad<F>(f: F, params: &[f64]) -> Vec<f64>
where
    F: FnOnce(&mut Tape, Var) -> Var,
{
    value_and_grad(f, params).1
}

/// Evaluates `f` at `x` with `K` seed directions, returning value, first and
/// pure second directional derivatives of every output.
pub fn jvp2<const K: usize, F>(f: F, x: &[f64], directions: &[Vec<f64>; K]) -> Result<Vec<Dual2<K>>>
where
    F: FnOnce(&[Dual2<K>]) -> Vec<Dual2<K>>,
{
    if K > x.len() {
        return Err(Error::invalid(format!(
            "{K} directions for a {}-dimensional input",
            x.len()
        )));
    }
    if directions.iter().any(|d| d.len() != x.len()) {
        return Err(Error::dims("direction length differs from input length"));
    }
    let inputs: Vec<Dual2<K>> = x
        .iter()
        .enumerate()
        .map(|(i, &xi)| {
            let mut seed = [0.0; K];
            for (j, d) in directions.iter().enumerate() {
                seed[j] = d[i];
            }
            Dual2::seeded(xi, seed)
        })
        .collect();
    Ok(f(&inputs))
}

/// Latent directions handled per forward pass in [`jac_latent`].
const LATENT_CHUNK: usize = 4;

/// Jacobian of the model output with respect to `phi` at every point of
/// `x_batch`. Row `k · output_dim + f` holds `∂û_f(x_k)/∂φ`.
pub fn jac_latent<M: LatentFunction>(model: &M, phi: &[f64], x_batch: &[Vec<f64>]) -> Matrix {
    let q = model.latent_dim();
    let nf = model.output_dim();
    let mut jac = Matrix::zeros(x_batch.len() * nf, q);
    let mut out = vec![Dual::<LATENT_CHUNK>::constant(0.0); nf];
    let mut xs: Vec<Dual<LATENT_CHUNK>> = Vec::new();
    for start in (0..q).step_by(LATENT_CHUNK) {
        let width = LATENT_CHUNK.min(q - start);
        let phid: Vec<Dual<LATENT_CHUNK>> = phi
            .iter()
            .enumerate()
            .map(|(j, &p)| {
                if j >= start && j < start + width {
                    Dual::variable(p, j - start)
                } else {
                    Dual::constant(p)
                }
            })
            .collect();
        for (k, x) in x_batch.iter().enumerate() {
            xs.clear();
            xs.extend(x.iter().map(|&v| Dual::constant(v)));
            model.eval_generic(&xs, &phid, &mut out);
            for (f, o) in out.iter().enumerate() {
                let row = jac.row_mut(k * nf + f);
                row[start..start + width].copy_from_slice(&o.d1[..width]);
            }
        }
    }
    jac
}
