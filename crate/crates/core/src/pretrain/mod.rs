//! Offline training of the reduced network and hyper-network on full-order
//! trajectories: relative-error loss, Adam with cosine decay, minibatching
//! and checkpoints.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::net::{ArchConfig, Model, Normalizer};
use crate::pde::SnapshotSet;

/// How squared errors are normalized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// `|u_F − û|² / max(|u_F|², ε_rel)` at every sample.
    #[default]
    Pointwise,
    /// `Σ_x |u_F − û|² / Σ_x |u_F|²` per snapshot and field.
    Snapshot,
}

fn default_lr() -> f64 {
    5e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}
fn default_iterations() -> usize {
    100_000
}
fn default_n_x() -> usize {
    2048
}
fn default_n_t() -> usize {
    16
}
fn default_eps_rel() -> f64 {
    1e-8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_adam_eps")]
    pub adam_eps: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Spatial points per step, shared by all sampled snapshots.
    #[serde(default = "default_n_x")]
    pub n_x: usize,
    /// Time samples per trajectory and step.
    #[serde(default = "default_n_t")]
    pub n_t: usize,
    /// Trajectories per step; 0 means all.
    #[serde(default)]
    pub n_traj: usize,
    #[serde(default)]
    pub seed: u64,
    /// Denominator floor relative to the largest squared field value.
    #[serde(default = "default_eps_rel")]
    pub eps_rel: f64,
    #[serde(default)]
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            adam_eps: default_adam_eps(),
            iterations: default_iterations(),
            n_x: default_n_x(),
            n_t: default_n_t(),
            n_traj: 0,
            seed: 0,
            eps_rel: default_eps_rel(),
            loss: LossKind::Pointwise,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.lr, self.adam_eps, self.eps_rel];
        if pos.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::config("learning rate, Adam ε and ε_rel must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("Adam betas must lie in [0, 1)"));
        }
        if self.n_x == 0 || self.n_t == 0 {
            return Err(Error::config("batch sizes must be positive"));
        }
        Ok(())
    }
}

/// `lr0 · ½ (1 + cos(π · step / total))`.
pub fn cosine_lr(lr0: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return lr0;
    }
    let s = step.min(total) as f64 / total as f64;
    lr0 * 0.5 * (1.0 + (std::f64::consts::PI * s).cos())
}

/// First and second moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64, cfg: &TrainConfig) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::dims("Adam parameter, gradient and state sizes differ"));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let mh = state.m[i] / c1;
        let vh = state.v[i] / c2;
        params[i] -= lr * mh / (vh.sqrt() + cfg.adam_eps);
    }
    Ok(())
}

/// Loss weights `w` such that the loss is `Σ w (û − u_F)²`.
///
/// `target` is `samples × n_fields`; `group[s]` is the trajectory of sample
/// `s` and `snapshot[s]` its (trajectory, time) pair. Pointwise weights give
/// the mean over each trajectory's samples of the floored relative error,
/// then the mean over trajectories; snapshot weights give the mean over
/// snapshots and fields of the ratio of squared norms.
pub fn loss_weights(
    target: &[f64],
    n_fields: usize,
    group: &[usize],
    snapshot: &[usize],
    kind: LossKind,
    floor: f64,
) -> Vec<f64> {
    let n = group.len();
    let count = |ids: &[usize]| {
        let k = ids.iter().copied().max().map_or(0, |m| m + 1);
        let mut c = vec![0usize; k];
        for &i in ids {
            c[i] += 1;
        }
        c
    };
    let per_group = count(group);
    let n_groups = per_group.iter().filter(|&&c| c > 0).count().max(1) as f64;
    let mut w = vec![0.0; n * n_fields];
    match kind {
        LossKind::Pointwise => {
            for s in 0..n {
                let denom = per_group[group[s]] as f64 * n_fields as f64 * n_groups;
                for f in 0..n_fields {
                    let u = target[s * n_fields + f];
                    w[s * n_fields + f] = 1.0 / ((u * u).max(floor) * denom);
                }
            }
        }
        LossKind::Snapshot => {
            let k = snapshot.iter().copied().max().map_or(0, |m| m + 1);
            let mut norm = vec![0.0; k * n_fields];
            for s in 0..n {
                for f in 0..n_fields {
                    norm[snapshot[s] * n_fields + f] += target[s * n_fields + f].powi(2);
                }
            }
            let snaps_per_group = {
                let mut seen = vec![usize::MAX; k];
                let mut c = vec![0usize; per_group.len()];
                for s in 0..n {
                    if seen[snapshot[s]] == usize::MAX {
                        seen[snapshot[s]] = group[s];
                        c[group[s]] += 1;
                    }
                }
                c
            };
            for s in 0..n {
                let denom = snaps_per_group[group[s]] as f64 * n_fields as f64 * n_groups;
                for f in 0..n_fields {
                    w[s * n_fields + f] = 1.0 / (norm[snapshot[s] * n_fields + f].max(floor) * denom);
                }
            }
        }
    }
    w
}

/// Mean relative error of `pred` against `target` (both `samples × n_fields`),
/// averaged within each trajectory group and then across groups.
pub fn relative_loss(pred: &[f64], target: &[f64], n_fields: usize, group: &[usize], floor: f64) -> f64 {
    let snaps: Vec<usize> = (0..group.len()).collect();
    let w = loss_weights(target, n_fields, group, &snaps, LossKind::Pointwise, floor);
    weighted_sq(pred, target, &w)
}

fn weighted_sq(pred: &[f64], target: &[f64], w: &[f64]) -> f64 {
    pred.iter()
        .zip(target)
        .zip(w)
        .map(|((p, t), w)| w * (p - t) * (p - t))
        .sum()
}

/// Samples drawn for one optimizer step, with all constants the loss needs.
#[derive(Clone, Debug)]
pub struct Batch {
    /// Normalized `(t, μ)` per snapshot, `P × (1 + n_μ)`.
    pub hyper_in: Tensor,
    /// Normalized coordinates, `n_x × d`.
    pub x: Tensor,
    /// `P·n_x × n_fields`, snapshot-major.
    pub target: Vec<f64>,
    pub weights: Vec<f64>,
    pub n_snapshots: usize,
}

/// Reference data prepared once per training run.
pub struct TrainData<'a> {
    pub set: &'a SnapshotSet,
    pub x_norm: Matrix,
    pub floor: f64,
}

impl<'a> TrainData<'a> {
    pub fn new(set: &'a SnapshotSet, normalizer: &Normalizer, eps_rel: f64) -> Result<Self> {
        if set.trajectories.is_empty() || set.times().is_empty() {
            return Err(Error::invalid("training needs at least one snapshot"));
        }
        let pts = set.grid.points();
        let mut x_norm = Matrix::zeros(pts.rows(), pts.cols());
        for i in 0..pts.rows() {
            normalizer.x(pts.row(i), x_norm.row_mut(i));
        }
        let max = set
            .trajectories
            .iter()
            .flat_map(|t| t.fields.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(TrainData {
            set,
            x_norm,
            floor: eps_rel * max * max,
        })
    }

    /// Builds the batch of the given snapshot and point indices.
    pub fn batch(
        &self,
        normalizer: &Normalizer,
        snapshots: &[(usize, usize)],
        points: &[usize],
        kind: LossKind,
    ) -> Batch {
        let nf = self.set.problem.n_fields();
        let d = self.x_norm.cols();
        let n_mu = self.set.trajectories[0].mu.len();
        let mut hyper = Vec::with_capacity(snapshots.len() * (1 + n_mu));
        let mut target = Vec::with_capacity(snapshots.len() * points.len() * nf);
        let mut group = Vec::with_capacity(snapshots.len() * points.len());
        let mut snap = Vec::with_capacity(group.capacity());
        for (p, &(i, k)) in snapshots.iter().enumerate() {
            let tr = &self.set.trajectories[i];
            hyper.extend(normalizer.hyper_input(tr.times[k], &tr.mu));
            for &j in points {
                for f in 0..nf {
                    target.push(tr.field(k, f)[j]);
                }
                group.push(i);
                snap.push(p);
            }
        }
        let mut x = Vec::with_capacity(points.len() * d);
        for &j in points {
            x.extend_from_slice(self.x_norm.row(j));
        }
        let weights = loss_weights(&target, nf, &group, &snap, kind, self.floor);
        Batch {
            hyper_in: Tensor::new(snapshots.len(), 1 + n_mu, hyper),
            x: Tensor::new(points.len(), d, x),
            target,
            weights,
            n_snapshots: snapshots.len(),
        }
    }

    /// Random batch for `step`; the stream depends only on `(seed, step)`.
    pub fn sample(&self, normalizer: &Normalizer, cfg: &TrainConfig, step: usize) -> Batch {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(step as u64 + 1);
        let m = self.set.trajectories.len();
        let k = self.set.times().len();
        let n = self.x_norm.rows();
        let trajs: Vec<usize> = if cfg.n_traj == 0 || cfg.n_traj >= m {
            (0..m).collect()
        } else {
            let mut v = sample(&mut rng, m, cfg.n_traj).into_vec();
            v.sort_unstable();
            v
        };
        let mut snaps = Vec::with_capacity(trajs.len() * cfg.n_t);
        for &i in &trajs {
            let mut ts = sample(&mut rng, k, cfg.n_t.min(k)).into_vec();
            ts.sort_unstable();
            snaps.extend(ts.into_iter().map(|t| (i, t)));
        }
        let mut pts = sample(&mut rng, n, cfg.n_x.min(n)).into_vec();
        pts.sort_unstable();
        self.batch(normalizer, &snaps, &pts, cfg.loss)
    }
}

/// Loss and gradient with respect to the flat parameter vector.
pub fn loss_and_grad(model: &Model, params: &[f64], batch: &Batch) -> Result<(f64, Vec<f64>)> {
    let hyper = model
        .hyper
        .as_ref()
        .ok_or_else(|| Error::invalid("model has no hyper-network to train"))?;
    let mut tape = Tape::new();
    let p = tape.leaf(Tensor::row_vector(params.to_vec()));
    let hin = tape.constant(batch.hyper_in.clone());
    let phi = hyper.forward_tape(&mut tape, p, hin);
    let n_x = batch.x.rows;
    let idx: Vec<usize> = (0..batch.n_snapshots).flat_map(|s| std::iter::repeat(s).take(n_x)).collect();
    let phi_rows = tape.gather(phi, idx);
    let mut xs = Vec::with_capacity(batch.n_snapshots * batch.x.len());
    for _ in 0..batch.n_snapshots {
        xs.extend_from_slice(&batch.x.data);
    }
    let x = tape.constant(Tensor::new(batch.n_snapshots * n_x, batch.x.cols, xs));
    let pred = model.net.forward_tape(&mut tape, p, x, phi_rows);
    let nf = model.net.output_dim;
    let target = tape.constant(Tensor::new(batch.target.len() / nf, nf, batch.target.clone()));
    let w = tape.constant(Tensor::new(batch.weights.len() / nf, nf, batch.weights.clone()));
    let e = tape.sub(pred, target);
    let e2 = tape.mul(e, e);
    let we = tape.mul(e2, w);
    let loss = tape.sum(we);
    let value = tape.scalar(loss);
    let grads = tape.backward(loss);
    Ok((value, grads.wrt(&tape, p).data))
}

/// Training progress of a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum TrainStatus {
    Completed,
    /// The loss became non-finite at `step`; parameters are from the last
    /// finite step.
    Diverged { step: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

/// Trained model plus everything needed to resume or audit the run.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub config: TrainConfig,
    pub train_mus: Vec<Vec<f64>>,
    pub history: Vec<LogEntry>,
    pub adam: AdamState,
    pub status: TrainStatus,
}

impl Checkpoint {
    pub fn step(&self) -> usize {
        self.adam.step as usize
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.history.last().map(|e| e.loss)
    }
}

/// Normalizer fitted to a snapshot set's times, parameters and domain.
pub fn fit_normalizer(set: &SnapshotSet) -> Result<Normalizer> {
    Normalizer::fit(set.times(), &set.mus(), set.grid.lo.clone(), set.grid.hi.clone())
}

/// Fresh, untrained checkpoint.
pub fn init_checkpoint(set: &SnapshotSet, arch: ArchConfig, cfg: &TrainConfig) -> Result<Checkpoint> {
    cfg.validate()?;
    if set.trajectories.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if arch.input_dim != set.problem.dim() || arch.output_dim != set.problem.n_fields() {
        return Err(Error::config("architecture does not match the problem's dimensions"));
    }
    let normalizer = fit_normalizer(set)?;
    let model = Model::new(arch, normalizer, cfg.seed)?;
    let n = model.params.len();
    Ok(Checkpoint {
        model,
        config: cfg.clone(),
        train_mus: set.mus(),
        history: Vec::new(),
        adam: AdamState::new(n),
        status: TrainStatus::Completed,
    })
}

/// Trains from scratch for `cfg.iterations` steps.
pub fn pretrain(set: &SnapshotSet, arch: ArchConfig, cfg: &TrainConfig) -> Result<Checkpoint> {
    let ckpt = init_checkpoint(set, arch, cfg)?;
    resume(ckpt, set, cfg.iterations, |_| {})
}

/// Continues training until `total` steps have been taken. `progress` sees
/// every log entry.
pub fn resume(
    mut ckpt: Checkpoint,
    set: &SnapshotSet,
    total: usize,
    mut progress: impl FnMut(&LogEntry),
) -> Result<Checkpoint> {
    let cfg = ckpt.config.clone();
    cfg.validate()?;
    let data = TrainData::new(set, &ckpt.model.normalizer, cfg.eps_rel)?;
    let mut params = ckpt.model.params.data().to_vec();
    let mut step = ckpt.step();
    while step < total {
        let batch = data.sample(&ckpt.model.normalizer, &cfg, step);
        let (loss, grads) = loss_and_grad(&ckpt.model, &params, &batch)?;
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            ckpt.status = TrainStatus::Diverged { step };
            break;
        }
        let lr = cosine_lr(cfg.lr, step, cfg.iterations.max(total));
        let mut next = params.clone();
        adam_step(&mut next, &grads, &mut ckpt.adam, lr, &cfg)?;
        params = next;
        ckpt.model.params.load(&params)?;
        let entry = LogEntry { step, lr, loss };
        progress(&entry);
        ckpt.history.push(entry);
        step += 1;
    }
    Ok(ckpt)
}

/// Prediction of every snapshot of `set`, laid out like the trajectories.
pub fn predict(model: &Model, set: &SnapshotSet) -> Result<Vec<Vec<f64>>> {
    let pts = set.grid.points();
    let n = set.grid.len();
    let nf = model.net.output_dim;
    set.trajectories
        .iter()
        .map(|tr| {
            let mut out = Vec::with_capacity(tr.fields.len());
            for &t in &tr.times {
                let phi = model.latent(t, &tr.mu);
                let f = model.field(&pts, &phi)?;
                for c in 0..nf {
                    out.extend((0..n).map(|i| f[(i, c)]));
                }
            }
            Ok(out)
        })
        .collect()
}

/// Loss-formula error of `model` over every point and time of `set`. The
/// denominator floor is `eps_rel` times the set's largest squared value.
pub fn mean_relative_error(model: &Model, set: &SnapshotSet, kind: LossKind, eps_rel: f64) -> Result<f64> {
    let preds = predict(model, set)?;
    Ok(relative_error_of(set, &preds, kind, eps_rel))
}

/// The loss formula applied to arbitrary predictions (laid out like the
/// trajectories' `fields`).
pub fn relative_error_of(set: &SnapshotSet, preds: &[Vec<f64>], kind: LossKind, eps_rel: f64) -> f64 {
    let max = set
        .trajectories
        .iter()
        .flat_map(|t| t.fields.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = eps_rel * max * max;
    let nf = set.problem.n_fields();
    let n = set.grid.len();
    let m = set.trajectories.len() as f64;
    let mut total = 0.0;
    for (tr, pred) in set.trajectories.iter().zip(preds) {
        let k = tr.times.len();
        let mut acc = 0.0;
        for s in 0..k {
            for f in 0..nf {
                let u = tr.field(s, f);
                let p = &pred[s * nf * n + f * n..s * nf * n + (f + 1) * n];
                match kind {
                    LossKind::Pointwise => {
                        acc += u
                            .iter()
                            .zip(p)
                            .map(|(a, b)| (a - b).powi(2) / (a * a).max(floor))
                            .sum::<f64>()
                            / (n * k * nf) as f64;
                    }
                    LossKind::Snapshot => {
                        let num: f64 = u.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum();
                        let den: f64 = u.iter().map(|a| a * a).sum();
                        acc += num / den.max(floor) / (k * nf) as f64;
                    }
                }
            }
        }
        total += acc / m;
    }
    total
}

#[cfg(test)]
mod tests;
