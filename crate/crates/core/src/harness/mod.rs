//! Experiment plumbing: configuration, file formats, the drivers behind each
//! CLI subcommand and the command-line front end.
//!
//! Every driver reads an [`ExperimentConfig`], writes its artifacts below
//! `out_dir` and records a manifest with the config digest, seed and build.

pub mod cli;
mod config;
mod io;

pub use config::{ArchSpec, BenchConfig, ExperimentConfig};
pub use io::{
    checkpoint_bytes, read_checkpoint, read_snapshot, read_snapshot_set, snapshot_bytes, write_atomic,
    write_checkpoint, write_snapshot, CheckpointHeader, Csv, ParamShape, SnapshotHeader, CHECKPOINT_MAGIC,
    SNAPSHOT_MAGIC,
};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::baselines::{interp_baseline, pod_error, pod_error_sweep};
use crate::error::{Error, Result};
use crate::net::Model;
use crate::online::{decode, integrate_eq, mass, residual_landscape, LatentTrajectory, NgConfig, ProblemRhs, Samples};
use crate::pde::{integrate, SnapshotSet, Trajectory};
use crate::pretrain::{init_checkpoint, predict, relative_error_of, resume, Checkpoint};

/// Build identifier recorded in manifests.
pub fn build_id() -> String {
    match option_env!("COLORA_BUILD_ID") {
        Some(id) => format!("{}+{id}", env!("CARGO_PKG_VERSION")),
        None => env!("CARGO_PKG_VERSION").to_string(),
    }
}

/// Worker threads for embarrassingly parallel loops; `COLORA_THREADS` caps it.
pub fn worker_count() -> usize {
    let avail = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var("COLORA_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(n) if n > 0 => n.min(avail),
        _ => avail,
    }
}

/// Applies `f` to every item on up to [`worker_count`] threads, preserving
/// order.
pub fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> Result<U> + Sync) -> Result<Vec<U>> {
    let workers = worker_count().min(items.len()).max(1);
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let mut slots: Vec<Option<Result<U>>> = (0..items.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let f = &f;
        let chunks: Vec<_> = slots
            .chunks_mut(items.len().div_ceil(workers))
            .zip(items.chunks(items.len().div_ceil(workers)))
            .map(|(out, inp)| {
                s.spawn(move || {
                    for (o, i) in out.iter_mut().zip(inp) {
                        *o = Some(f(i));
                    }
                })
            })
            .collect();
        for c in chunks {
            c.join().expect("worker panicked");
        }
    });
    slots.into_iter().map(|s| s.expect("every slot filled")).collect()
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_sha256: String,
    seed: u64,
    build_id: String,
    outputs: Vec<String>,
}

fn write_manifest(cfg: &ExperimentConfig, command: &str, outputs: &[PathBuf]) -> Result<()> {
    let m = Manifest {
        command,
        config_sha256: cfg.digest(),
        seed: cfg.seed,
        build_id: build_id(),
        outputs: outputs
            .iter()
            .map(|p| p.strip_prefix(&cfg.out_dir).unwrap_or(p).display().to_string())
            .collect(),
    };
    let name = format!("manifest_{}.json", command.replace(' ', "_"));
    write_atomic(&cfg.out_dir.join(name), &serde_json::to_vec_pretty(&m)?)?;
    write_atomic(&cfg.out_dir.join("config.json"), cfg.to_json().as_bytes())
}

fn log(msg: impl AsRef<str>) {
    eprintln!("[colora] {}", msg.as_ref());
}

/// Training and test trajectories of one experiment.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: SnapshotSet,
    pub test: SnapshotSet,
}

fn data_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.join("data")
}

/// Full-order trajectories at `mus`, solved in parallel.
pub fn solve_all(cfg: &ExperimentConfig, mus: &[f64]) -> Result<SnapshotSet> {
    let grid = cfg.grid();
    let times = cfg.times();
    let scheme = cfg.scheme();
    let trajs = par_map(mus, |&m| integrate(cfg.problem, &[m], &grid, &times, scheme))?;
    SnapshotSet::new(cfg.problem, grid, trajs)
}

/// `generate`: solves the full model at every training and test parameter
/// and writes one SNP1 file per parameter plus `data/index.csv`.
pub fn generate(cfg: &ExperimentConfig) -> Result<Dataset> {
    let train_mus = cfg.train_values()?;
    let test_mus = cfg.test_values();
    log(format!(
        "solving {} on {:?} for {} training and {} test parameters",
        cfg.problem.name(),
        cfg.grid().n,
        train_mus.len(),
        test_mus.len()
    ));
    let all: Vec<f64> = train_mus.iter().chain(&test_mus).copied().collect();
    let set = solve_all(cfg, &all)?;
    let dir = data_dir(cfg);
    let mut index = Csv::new(&["index", "mu", "split", "file"]);
    let mut outputs = Vec::new();
    for (i, t) in set.trajectories.iter().enumerate() {
        let split = if i < train_mus.len() { "train" } else { "test" };
        let name = format!("traj_{i:03}.snp");
        let path = dir.join(&name);
        write_snapshot(&path, cfg.problem, &set.grid, t)?;
        index.push(vec![i.to_string(), t.mu[0].to_string(), split.into(), name]);
        outputs.push(path);
    }
    let ipath = dir.join("index.csv");
    index.write(&ipath)?;
    outputs.push(ipath);
    write_manifest(cfg, "generate", &outputs)?;
    let (train, test) = set.trajectories.split_at(train_mus.len());
    Ok(Dataset {
        train: SnapshotSet::new(cfg.problem, set.grid.clone(), train.to_vec())?,
        test: SnapshotSet::new(cfg.problem, set.grid.clone(), test.to_vec())?,
    })
}

/// Reads the dataset written by [`generate`], or generates it when absent
/// or produced for different parameters.
pub fn load_or_generate(cfg: &ExperimentConfig) -> Result<Dataset> {
    let index = data_dir(cfg).join("index.csv");
    if index.exists() {
        let csv = Csv::read(&index)?;
        let mus = csv.column("mu").ok_or_else(|| Error::invalid("index.csv lacks a mu column"))?;
        let split: Vec<&str> = csv.rows.iter().map(|r| r[2].as_str()).collect();
        let files: Vec<PathBuf> = csv.rows.iter().map(|r| data_dir(cfg).join(&r[3])).collect();
        let pick = |s: &str| -> (Vec<f64>, Vec<PathBuf>) {
            let idx: Vec<usize> = (0..mus.len()).filter(|&i| split[i] == s).collect();
            (idx.iter().map(|&i| mus[i]).collect(), idx.iter().map(|&i| files[i].clone()).collect())
        };
        let (tr_mu, tr_files) = pick("train");
        let (te_mu, te_files) = pick("test");
        if tr_mu == cfg.train_values()? && te_mu == cfg.test_values() {
            let train = read_snapshot_set(&tr_files)?;
            let test = read_snapshot_set(&te_files)?;
            if train.grid == cfg.grid() && train.times() == cfg.times().as_slice() {
                return Ok(Dataset { train, test });
            }
        }
        log("stored dataset does not match the config; regenerating");
    }
    generate(cfg)
}

fn checkpoint_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.join("checkpoint.ckpt")
}

/// Trains a fresh model on `train` with the config's architecture and
/// optimizer settings.
pub fn fit(cfg: &ExperimentConfig, train: &SnapshotSet, latent_dim: usize) -> Result<Checkpoint> {
    let mut arch = cfg.arch_config();
    arch.latent_dim = latent_dim;
    let tc = cfg.train_config();
    let ckpt = init_checkpoint(train, arch, &tc)?;
    let every = (tc.iterations / 20).max(1);
    let start = Instant::now();
    resume(ckpt, train, tc.iterations, |e| {
        if e.step % every == 0 || e.step + 1 == tc.iterations {
            log(format!(
                "step {:>7} lr {:.3e} loss {:.4e} ({:.1?})",
                e.step,
                e.lr,
                e.loss,
                start.elapsed()
            ));
        }
    })
}

/// `train`: fits the model and writes `checkpoint.ckpt` and `train_log.csv`.
pub fn train(cfg: &ExperimentConfig) -> Result<Checkpoint> {
    let data = load_or_generate(cfg)?;
    let ckpt = fit(cfg, &data.train, cfg.arch.latent_dim)?;
    let path = checkpoint_path(cfg);
    write_checkpoint(&path, &ckpt)?;
    let mut csv = Csv::new(&["step", "lr", "loss"]);
    for e in &ckpt.history {
        csv.push(vec![e.step.to_string(), e.lr.to_string(), e.loss.to_string()]);
    }
    let lpath = cfg.out_dir.join("train_log.csv");
    csv.write(&lpath)?;
    write_manifest(cfg, "train", &[path, lpath])?;
    Ok(ckpt)
}

pub fn load_checkpoint(cfg: &ExperimentConfig) -> Result<Checkpoint> {
    let path = checkpoint_path(cfg);
    if !path.exists() {
        return Err(Error::invalid(format!("missing checkpoint {}; run `train` first", path.display())));
    }
    read_checkpoint(&path)
}

fn single(set: &SnapshotSet, t: &Trajectory) -> Result<SnapshotSet> {
    SnapshotSet::new(set.problem, set.grid.clone(), vec![t.clone()])
}

/// Loss-formula error of predictions laid out like `set`.
pub fn error_of(cfg: &ExperimentConfig, set: &SnapshotSet, preds: &[Vec<f64>]) -> f64 {
    relative_error_of(set, preds, cfg.train.loss, cfg.train.eps_rel)
}

/// Relative Frobenius error over a whole set.
pub fn frobenius_error(set: &SnapshotSet, preds: &[Vec<f64>]) -> f64 {
    let (mut e, mut n) = (0.0, 0.0);
    for (t, p) in set.trajectories.iter().zip(preds) {
        for (u, v) in t.fields.iter().zip(p) {
            e += (u - v) * (u - v);
            n += u * u;
        }
    }
    (e / n).sqrt()
}

/// Per-parameter errors of one prediction method.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodErrors {
    pub per_mu: Vec<(f64, f64)>,
    pub mean: f64,
    pub frobenius: f64,
}

fn method_errors(cfg: &ExperimentConfig, test: &SnapshotSet, preds: &[Vec<f64>]) -> Result<MethodErrors> {
    let mut per_mu = Vec::new();
    for (t, p) in test.trajectories.iter().zip(preds) {
        per_mu.push((t.mu[0], error_of(cfg, &single(test, t)?, std::slice::from_ref(p))));
    }
    Ok(MethodErrors {
        per_mu,
        mean: error_of(cfg, test, preds),
        frobenius: frobenius_error(test, preds),
    })
}

fn errors_csv(e: &MethodErrors) -> Csv {
    let mut csv = Csv::new(&["mu", "error"]);
    for (m, v) in &e.per_mu {
        csv.push_nums(&[*m, *v]);
    }
    csv.push(vec!["mean".into(), e.mean.to_string()]);
    csv.push(vec!["frobenius".into(), e.frobenius.to_string()]);
    csv
}

/// CoLoRA-D predictions of every test trajectory on the FOM grid.
pub fn forecast_set(model: &Model, test: &SnapshotSet) -> Result<Vec<Vec<f64>>> {
    predict(model, test)
}

/// `forecast`: CoLoRA-D on the test parameters.
pub fn forecast(cfg: &ExperimentConfig) -> Result<MethodErrors> {
    let ckpt = load_checkpoint(cfg)?;
    let data = load_or_generate(cfg)?;
    warn_extrapolation(&ckpt, &data.test);
    let preds = forecast_set(&ckpt.model, &data.test)?;
    let dir = cfg.out_dir.join("forecast");
    let mut outputs = Vec::new();
    for (i, (t, p)) in data.test.trajectories.iter().zip(&preds).enumerate() {
        let tr = Trajectory::new(t.mu.clone(), t.times.clone(), t.n_fields, t.n_points, p.clone())?;
        let path = dir.join(format!("test_{i:03}.snp"));
        write_snapshot(&path, cfg.problem, &data.test.grid, &tr)?;
        outputs.push(path);
    }
    let errs = method_errors(cfg, &data.test, &preds)?;
    let path = cfg.out_dir.join("forecast_errors.csv");
    errors_csv(&errs).write(&path)?;
    outputs.push(path);
    write_manifest(cfg, "forecast", &outputs)?;
    log(format!("CoLoRA-D mean relative error {:.4e}", errs.mean));
    Ok(errs)
}

fn warn_extrapolation(ckpt: &Checkpoint, test: &SnapshotSet) {
    let (lo, hi) = ckpt
        .train_mus
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), m| (a.min(m[0]), b.max(m[0])));
    for t in &test.trajectories {
        if t.mu[0] < lo || t.mu[0] > hi {
            log(format!("warning: μ = {} lies outside the training range [{lo}, {hi}]", t.mu[0]));
        }
    }
}

/// CoLoRA-EQ latent trajectory and decoded fields on the FOM grid.
pub fn eq_trajectory(
    model: &Model,
    set: &SnapshotSet,
    t: &Trajectory,
    ng: &NgConfig,
) -> Result<(LatentTrajectory, Trajectory)> {
    let lt = integrate_eq(model, set.problem, &t.mu, &t.times, ng)?;
    let tr = decode(model, &t.mu, &lt, &set.grid.points())?;
    Ok((lt, tr))
}

fn latent_csv(lt: &LatentTrajectory) -> Csv {
    let q = lt.phi.first().map_or(0, Vec::len);
    let mut h = vec!["t".to_string()];
    h.extend((1..=q).map(|j| format!("phi{j}")));
    h.push("residual".into());
    let mut csv = Csv {
        header: h,
        rows: Vec::new(),
    };
    for ((t, p), r) in lt.times.iter().zip(&lt.phi).zip(&lt.residuals) {
        let mut row = vec![*t];
        row.extend(p);
        row.push(*r);
        csv.push_nums(&row);
    }
    csv
}

/// `integrate`: CoLoRA-EQ on the test parameters.
pub fn integrate_test(cfg: &ExperimentConfig) -> Result<MethodErrors> {
    let ckpt = load_checkpoint(cfg)?;
    let data = load_or_generate(cfg)?;
    let ng = cfg.ng_config();
    let dir = cfg.out_dir.join("integrate");
    let mut outputs = Vec::new();
    let mut preds = Vec::new();
    for (i, t) in data.test.trajectories.iter().enumerate() {
        let (lt, tr) = eq_trajectory(&ckpt.model, &data.test, t, &ng)?;
        log(format!(
            "μ = {}: {} steps ({} rejected), {} rhs evaluations",
            t.mu[0], lt.steps, lt.rejected, lt.rhs_evals
        ));
        smoothness_report(&lt);
        let lpath = dir.join(format!("latent_{i:03}.csv"));
        latent_csv(&lt).write(&lpath)?;
        let spath = dir.join(format!("test_{i:03}.snp"));
        write_snapshot(&spath, cfg.problem, &data.test.grid, &tr)?;
        outputs.extend([lpath, spath]);
        preds.push(tr.fields);
    }
    let errs = method_errors(cfg, &data.test, &preds)?;
    let path = cfg.out_dir.join("integrate_errors.csv");
    errors_csv(&errs).write(&path)?;
    outputs.push(path);
    write_manifest(cfg, "integrate", &outputs)?;
    log(format!("CoLoRA-EQ mean relative error {:.4e}", errs.mean));
    Ok(errs)
}

fn smoothness_report(lt: &LatentTrajectory) {
    let mut s = lt.latent_speeds();
    if s.is_empty() {
        return;
    }
    let max = s.iter().copied().fold(0.0, f64::max);
    s.sort_by(f64::total_cmp);
    let median = s[s.len() / 2];
    log(format!(
        "latent speed: max {max:.3e}, median {median:.3e}, ratio {:.2}",
        max / median.max(1e-300)
    ));
}

/// `baseline pod`: POD projection error of the test set for `n = 1..=pod_max`.
pub fn baseline_pod(cfg: &ExperimentConfig) -> Result<Vec<(usize, f64)>> {
    let data = load_or_generate(cfg)?;
    let cols: usize = data.train.trajectories.iter().map(|t| t.times.len()).sum();
    let n_max = cfg.bench.pod_max.min(cols).min(data.train.grid.len() * cfg.problem.n_fields());
    let sweep = pod_error_sweep(&data.train, &data.test, n_max)?;
    let mut csv = Csv::new(&["n", "error"]);
    for (n, e) in &sweep {
        csv.push(vec![n.to_string(), e.to_string()]);
    }
    let path = cfg.out_dir.join("baseline_pod.csv");
    csv.write(&path)?;
    write_manifest(cfg, "baseline pod", &[path])?;
    Ok(sweep)
}

/// Piecewise-linear interpolation predictions of every test trajectory.
pub fn interp_set(train: &SnapshotSet, test: &SnapshotSet) -> Result<Vec<Vec<f64>>> {
    test.trajectories
        .iter()
        .map(|t| Ok(interp_baseline(train, t.mu[0])?.fields))
        .collect()
}

/// `baseline interp`: parameter interpolation errors on the test set.
pub fn baseline_interp(cfg: &ExperimentConfig) -> Result<MethodErrors> {
    let data = load_or_generate(cfg)?;
    let preds = interp_set(&data.train, &data.test)?;
    let errs = method_errors(cfg, &data.test, &preds)?;
    let path = cfg.out_dir.join("baseline_interp.csv");
    errors_csv(&errs).write(&path)?;
    write_manifest(cfg, "baseline interp", &[path])?;
    Ok(errs)
}

/// One row of the n-width sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct NwidthRow {
    pub q: usize,
    pub colora_d: f64,
    pub colora_eq: Option<f64>,
    pub pod: f64,
}

/// `bench nwidth`: CoLoRA-D/EQ with `q` latents against POD with `n = q`.
pub fn bench_nwidth(cfg: &ExperimentConfig) -> Result<Vec<NwidthRow>> {
    let data = load_or_generate(cfg)?;
    let mut rows = Vec::new();
    let mut csv = Csv::new(&["q_or_n", "colora_D_err", "colora_EQ_err", "pod_err"]);
    for &q in &cfg.bench.q_list {
        log(format!("n-width: q = {q}"));
        let ckpt = fit(cfg, &data.train, q)?;
        let d = error_of(cfg, &data.test, &forecast_set(&ckpt.model, &data.test)?);
        let eq = if cfg.bench.with_eq {
            let ng = cfg.ng_config();
            let preds = data
                .test
                .trajectories
                .iter()
                .map(|t| Ok(eq_trajectory(&ckpt.model, &data.test, t, &ng)?.1.fields))
                .collect::<Result<Vec<_>>>()?;
            Some(error_of(cfg, &data.test, &preds))
        } else {
            None
        };
        let pod = pod_error(&data.train, &data.test, q)?;
        csv.push(vec![
            q.to_string(),
            d.to_string(),
            eq.map_or("nan".into(), |v| v.to_string()),
            pod.to_string(),
        ]);
        rows.push(NwidthRow {
            q,
            colora_d: d,
            colora_eq: eq,
            pod,
        });
    }
    let path = cfg.out_dir.join("bench_nwidth.csv");
    csv.write(&path)?;
    write_manifest(cfg, "bench nwidth", &[path])?;
    Ok(rows)
}

/// Median wall-clock seconds of the three routes to `φ` (or the FOM state)
/// on the same output time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeedReport {
    pub fom: f64,
    pub colora_eq: f64,
    pub colora_d: f64,
}

impl SpeedReport {
    pub fn eq_speedup(&self) -> f64 {
        self.fom / self.colora_eq
    }
    pub fn d_speedup(&self) -> f64 {
        self.fom / self.colora_d
    }
}

fn median_time(reps: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    f()?;
    let mut ts = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t0 = Instant::now();
        f()?;
        ts.push(t0.elapsed().as_secs_f64());
    }
    ts.sort_by(f64::total_cmp);
    Ok(if reps % 2 == 1 {
        ts[reps / 2]
    } else {
        0.5 * (ts[reps / 2 - 1] + ts[reps / 2])
    })
}

/// Times the FOM solve, CoLoRA-EQ integration and CoLoRA-D latent
/// evaluation at `mu` with one warm-up run each.
pub fn measure_speed(cfg: &ExperimentConfig, model: &Model, mu: f64) -> Result<SpeedReport> {
    let grid = cfg.grid();
    let times = cfg.times();
    let scheme = cfg.scheme();
    let ng = cfg.ng_config();
    let reps = cfg.bench.repetitions;
    let fom = median_time(reps, || integrate(cfg.problem, &[mu], &grid, &times, scheme).map(drop))?;
    let colora_eq = median_time(reps, || integrate_eq(model, cfg.problem, &[mu], &times, &ng).map(drop))?;
    let colora_d = median_time(reps, || {
        let mut acc = 0.0;
        for &t in &times {
            acc += model.latent(t, &[mu])[0];
        }
        std::hint::black_box(acc);
        Ok(())
    })?;
    Ok(SpeedReport { fom, colora_eq, colora_d })
}

/// `bench speed`: timing of the first test parameter.
pub fn bench_speed(cfg: &ExperimentConfig) -> Result<SpeedReport> {
    let ckpt = load_checkpoint(cfg)?;
    let mu = cfg.test_values()[0];
    let r = measure_speed(cfg, &ckpt.model, mu)?;
    let mut csv = Csv::new(&["method", "median_seconds", "speedup_vs_fom"]);
    csv.push(vec!["fom".into(), r.fom.to_string(), "1".into()]);
    csv.push(vec!["colora_eq".into(), r.colora_eq.to_string(), r.eq_speedup().to_string()]);
    csv.push(vec!["colora_d".into(), r.colora_d.to_string(), r.d_speedup().to_string()]);
    let path = cfg.out_dir.join("bench_speed.csv");
    csv.write(&path)?;
    write_manifest(cfg, "bench speed", &[path])?;
    log(format!(
        "FOM {:.3}s, CoLoRA-EQ {:.3}s ({:.1}x), CoLoRA-D {:.3e}s ({:.0}x)",
        r.fom,
        r.colora_eq,
        r.eq_speedup(),
        r.colora_d,
        r.d_speedup()
    ));
    Ok(r)
}

/// Errors of each method for each training-set size.
pub type EfficiencyTable = BTreeMap<(usize, String), f64>;

/// `bench data-efficiency`: CoLoRA-D, CoLoRA-EQ and interpolation errors on
/// the fixed test parameters as the training set grows.
pub fn bench_data_efficiency(cfg: &ExperimentConfig) -> Result<EfficiencyTable> {
    let test_mus = cfg.test_values();
    let mut needed: Vec<f64> = test_mus.clone();
    for &m in &cfg.bench.m_list {
        needed.extend(cfg.train_values_for(m)?);
    }
    needed.sort_by(f64::total_cmp);
    needed.dedup();
    log(format!("data efficiency: {} full-order solves", needed.len()));
    let all = solve_all(cfg, &needed)?;
    let test = all.subset(&test_mus)?;
    let mut table = EfficiencyTable::new();
    let mut csv = Csv::new(&["m", "method", "error"]);
    for &m in &cfg.bench.m_list {
        let train = all.subset(&cfg.train_values_for(m)?)?;
        let mut record = |method: &str, e: f64| {
            csv.push(vec![m.to_string(), method.into(), e.to_string()]);
            table.insert((m, method.to_string()), e);
        };
        if m >= 2 {
            record("interp", error_of(cfg, &test, &interp_set(&train, &test)?));
        }
        log(format!("data efficiency: training with m = {m}"));
        let ckpt = fit(cfg, &train, cfg.arch.latent_dim)?;
        record("colora_d", error_of(cfg, &test, &forecast_set(&ckpt.model, &test)?));
        if cfg.bench.with_eq {
            let ng = cfg.ng_config();
            let preds = test
                .trajectories
                .iter()
                .map(|t| Ok(eq_trajectory(&ckpt.model, &test, t, &ng)?.1.fields))
                .collect::<Result<Vec<_>>>()?;
            record("colora_eq", error_of(cfg, &test, &preds));
        }
    }
    let path = cfg.out_dir.join("bench_data_efficiency.csv");
    csv.write(&path)?;
    write_manifest(cfg, "bench data-efficiency", &[path])?;
    Ok(table)
}

/// Mass history of constrained and unconstrained CoLoRA-EQ and of CoLoRA-D.
#[derive(Clone, Debug, PartialEq)]
pub struct ConservationReport {
    pub times: Vec<f64>,
    pub drift_constrained: Vec<f64>,
    pub drift_unconstrained: Vec<f64>,
    pub drift_d: Vec<f64>,
    /// Largest `|C φ̇|` seen by the constrained run.
    pub max_constraint: f64,
}

impl ConservationReport {
    pub fn max_constrained(&self) -> f64 {
        self.drift_constrained.iter().copied().fold(0.0, f64::max)
    }
    pub fn max_unconstrained(&self) -> f64 {
        self.drift_unconstrained.iter().copied().fold(0.0, f64::max)
    }
}

/// Relative mass drift along the three latent trajectories at `mu`.
pub fn conservation(cfg: &ExperimentConfig, model: &Model, mu: f64) -> Result<ConservationReport> {
    let times = cfg.times();
    let ng = cfg.ng_config();
    let (lo, hi) = cfg.problem.bounds();
    let samples = Samples::new(&lo, &hi, ng.sampling)?;
    let on = integrate_eq(model, cfg.problem, &[mu], &times, &NgConfig { conserve_mass: true, ..ng })?;
    let off = integrate_eq(model, cfg.problem, &[mu], &times, &NgConfig { conserve_mass: false, ..ng })?;
    let m = |phi: &[f64]| mass(model, phi, &samples.points, &samples.weights)[0];
    let m0 = m(&on.phi[0]);
    let drift = |phis: &[Vec<f64>]| phis.iter().map(|p| ((m(p) - m0) / m0).abs()).collect::<Vec<_>>();
    let d_phis: Vec<Vec<f64>> = times.iter().map(|&t| model.latent(t, &[mu])).collect();
    let md0 = m(&d_phis[0]);
    Ok(ConservationReport {
        drift_constrained: drift(&on.phi),
        drift_unconstrained: drift(&off.phi),
        drift_d: d_phis.iter().map(|p| ((m(p) - md0) / md0).abs()).collect(),
        times,
        max_constraint: on.max_constraint,
    })
}

/// `bench conservation`: mass drift at the first test parameter.
pub fn bench_conservation(cfg: &ExperimentConfig) -> Result<ConservationReport> {
    let ckpt = load_checkpoint(cfg)?;
    let r = conservation(cfg, &ckpt.model, cfg.test_values()[0])?;
    let mut csv = Csv::new(&["t", "drift_constrained", "drift_unconstrained", "drift_colora_d"]);
    for i in 0..r.times.len() {
        csv.push_nums(&[r.times[i], r.drift_constrained[i], r.drift_unconstrained[i], r.drift_d[i]]);
    }
    let path = cfg.out_dir.join("bench_conservation.csv");
    csv.write(&path)?;
    write_manifest(cfg, "bench conservation", &[path])?;
    log(format!(
        "max relative mass drift: constrained {:.3e}, unconstrained {:.3e}; max |C·φ̇| {:.3e}",
        r.max_constrained(),
        r.max_unconstrained(),
        r.max_constraint
    ));
    Ok(r)
}

/// Residual landscape around the hyper-network trajectory at `mu`.
#[derive(Clone, Debug, PartialEq)]
pub struct Landscape {
    pub axis0: Vec<f64>,
    pub axis1: Vec<f64>,
    pub residual: crate::linalg::Matrix,
    /// `(φ, residual)` along the latent trajectory.
    pub trajectory: Vec<([f64; 2], f64)>,
}

pub fn landscape_at(cfg: &ExperimentConfig, model: &Model, mu: f64) -> Result<Landscape> {
    if model.latent_dim() != 2 {
        return Err(Error::invalid("the residual landscape needs latent_dim = 2"));
    }
    let ng = cfg.ng_config();
    let (lo, hi) = cfg.problem.bounds();
    let samples = Samples::new(&lo, &hi, ng.sampling)?;
    let rhs = ProblemRhs {
        problem: cfg.problem,
        mu: vec![mu],
    };
    let path: Vec<Vec<f64>> = cfg.times().iter().map(|&t| model.latent(t, &[mu])).collect();
    let mut bounds = [(f64::INFINITY, f64::NEG_INFINITY); 2];
    for p in &path {
        for k in 0..2 {
            bounds[k] = (bounds[k].0.min(p[k]), bounds[k].1.max(p[k]));
        }
    }
    let axes: Vec<Vec<f64>> = bounds
        .iter()
        .map(|&(a, b)| {
            let pad = cfg.bench.margin * (b - a).max(1e-3);
            crate::pde::linspace(a - pad, b + pad, cfg.bench.lattice)
        })
        .collect();
    let residual = residual_landscape(model, &rhs, &samples, &axes[0], &axes[1], ng.lstsq_tol)?;
    let trajectory = path
        .iter()
        .map(|p| {
            let lone = residual_landscape(model, &rhs, &samples, &[p[0]], &[p[1]], ng.lstsq_tol)?;
            Ok(([p[0], p[1]], lone[(0, 0)]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Landscape {
        axis0: axes[0].clone(),
        axis1: axes[1].clone(),
        residual,
        trajectory,
    })
}

/// `landscape`: lattice and trajectory residuals at the first test parameter.
pub fn landscape(cfg: &ExperimentConfig) -> Result<Landscape> {
    let ckpt = load_checkpoint(cfg)?;
    let l = landscape_at(cfg, &ckpt.model, cfg.test_values()[0])?;
    let mut csv = Csv::new(&["kind", "phi1", "phi2", "residual"]);
    for (i, a) in l.axis0.iter().enumerate() {
        for (j, b) in l.axis1.iter().enumerate() {
            csv.push(vec!["lattice".into(), a.to_string(), b.to_string(), l.residual[(i, j)].to_string()]);
        }
    }
    for (p, r) in &l.trajectory {
        csv.push(vec!["trajectory".into(), p[0].to_string(), p[1].to_string(), r.to_string()]);
    }
    let path = cfg.out_dir.join("landscape.csv");
    csv.write(&path)?;
    write_manifest(cfg, "landscape", &[path])?;
    Ok(l)
}

/// Rows `(μ, t, φ₁ … φ_q)` from the hyper-network.
pub fn export_latents(model: &Model, mus: &[f64], times: &[f64]) -> Csv {
    let q = model.latent_dim();
    let mut h = vec!["mu".to_string(), "t".to_string()];
    h.extend((1..=q).map(|j| format!("phi{j}")));
    let mut csv = Csv {
        header: h,
        rows: Vec::new(),
    };
    for &mu in mus {
        for &t in times {
            let mut row = vec![mu, t];
            row.extend(model.latent(t, &[mu]));
            csv.push_nums(&row);
        }
    }
    csv
}

/// `latents`: hyper-network latents at the test parameters, and with `eq`
/// also the CoLoRA-EQ latents.
pub fn latents(cfg: &ExperimentConfig, eq: bool) -> Result<Csv> {
    let ckpt = load_checkpoint(cfg)?;
    let mus = cfg.test_values();
    let times = cfg.times();
    let csv = export_latents(&ckpt.model, &mus, &times);
    let path = cfg.out_dir.join("latents.csv");
    csv.write(&path)?;
    let mut outputs = vec![path];
    if eq {
        let ng = cfg.ng_config();
        let mut eqcsv = Csv {
            header: csv.header.clone(),
            rows: Vec::new(),
        };
        for &mu in &mus {
            let lt = integrate_eq(&ckpt.model, cfg.problem, &[mu], &times, &ng)?;
            for (t, p) in lt.times.iter().zip(&lt.phi) {
                let mut row = vec![mu, *t];
                row.extend(p);
                eqcsv.push_nums(&row);
            }
        }
        let p = cfg.out_dir.join("latents_eq.csv");
        eqcsv.write(&p)?;
        outputs.push(p);
    }
    write_manifest(cfg, "latents", &outputs)?;
    Ok(csv)
}

/// Files below `dir`, relative and sorted, for reproducibility checks.
pub fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d)? {
            let p = e?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).expect("below dir").to_path_buf());
            }
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests;
