use super::*;
use crate::net::LatentMode;
use crate::pde::{generate_dataset, Grid, PdeProblem, Scheme};

fn small_set() -> SnapshotSet {
    let g = Grid::new(vec![32], vec![0.0], vec![1.0]).unwrap();
    let times: Vec<f64> = (0..6).map(|k| k as f64 * 0.04).collect();
    generate_dataset(PdeProblem::Burgers1d, &[0.002, 0.008], &g, &times, Scheme::ImplicitEuler { dt: 0.01 }).unwrap()
}

fn small_arch() -> ArchConfig {
    let mut a = ArchConfig::new(1, 2, LatentMode::DiagAlpha);
    a.depth = 4;
    a.width = 8;
    a.hyper_width = 6;
    a
}

fn small_cfg(iterations: usize) -> TrainConfig {
    TrainConfig {
        iterations,
        n_x: 16,
        n_t: 3,
        seed: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn cosine_schedule() {
    assert_eq!(cosine_lr(0.1, 0, 100), 0.1);
    assert!(cosine_lr(0.1, 100, 100).abs() < 1e-18);
    assert!((cosine_lr(0.1, 50, 100) - 0.05).abs() < 1e-15);
}

#[test]
fn adam_cases() {
    let cfg = TrainConfig::default();
    let mut p = vec![1.0, -2.0];
    let mut s = AdamState::new(2);
    adam_step(&mut p, &[0.0, 0.0], &mut s, 5e-3, &cfg).unwrap();
    assert_eq!(p, vec![1.0, -2.0]);
    let mut p = vec![0.0];
    let mut s = AdamState::new(1);
    adam_step(&mut p, &[1.0], &mut s, 5e-3, &cfg).unwrap();
    // m̂ = 1, v̂ = 1 after bias correction.
    assert!((p[0] + 5e-3 / (1.0 + 1e-8)).abs() < 1e-18);
    assert!((p[0] + 4.99999e-3).abs() < 1e-8);
    let mut p = vec![0.0];
    let mut s = AdamState::new(1);
    let mut prev = 0.0;
    for _ in 0..500 {
        adam_step(&mut p, &[-3.0], &mut s, 1e-3, &cfg).unwrap();
        let step = p[0] - prev;
        prev = p[0];
        assert!((step - 1e-3).abs() < 1e-9);
    }
    assert!(adam_step(&mut p, &[1.0, 2.0], &mut s, 1e-3, &cfg).is_err());
}

#[test]
fn relative_loss_cases() {
    assert_eq!(relative_loss(&[1.0, 2.0], &[1.0, 2.0], 1, &[0, 0], 1e-12), 0.0);
    assert_eq!(relative_loss(&[1.0], &[2.0], 1, &[0], 1e-12), 0.25);
    // Group 0 has relative error 0.1 at both samples, group 1 has 0.3.
    let t = [1.0, 1.0, 1.0];
    let p = [1.0 + 0.1f64.sqrt(), 1.0 - 0.1f64.sqrt(), 1.0 + 0.3f64.sqrt()];
    assert!((relative_loss(&p, &t, 1, &[0, 0, 1], 1e-12) - 0.2).abs() < 1e-15);
    // Two fields are averaged.
    assert!((relative_loss(&[1.0, 3.0], &[2.0, 2.0], 2, &[0], 1e-12) - 0.25).abs() < 1e-15);
    // The floor caps the weight of vanishing targets.
    assert_eq!(relative_loss(&[1.0], &[0.0], 1, &[0], 0.5), 2.0);
}

#[test]
fn weights_match_direct_formula() {
    // Independent evaluation of both loss kinds on a hand-made batch.
    let target = [1.0, -2.0, 0.5, 3.0, 1e-9, 2.0];
    let pred = [1.5, -1.0, 0.0, 2.0, 0.1, 2.5];
    let group = [0, 0, 1];
    let snap = [0, 1, 2];
    let floor = 1e-4;
    let w = loss_weights(&target, 2, &group, &snap, LossKind::Pointwise, floor);
    let r = |p: f64, t: f64| (p - t) * (p - t) / (t * t).max(floor);
    let g0 = (r(1.5, 1.0) + r(-1.0, -2.0) + r(0.0, 0.5) + r(2.0, 3.0)) / 4.0;
    let g1 = (r(0.1, 1e-9) + r(2.5, 2.0)) / 2.0;
    assert!((weighted_sq(&pred, &target, &w) - (g0 + g1) / 2.0).abs() < 1e-12);
    let w = loss_weights(&target, 1, &[0, 0, 0, 0, 1, 1], &[0, 0, 1, 1, 2, 2], LossKind::Snapshot, floor);
    let s = |a: usize, b: usize| {
        let num: f64 = (a..b).map(|i| (pred[i] - target[i]).powi(2)).sum();
        let den: f64 = (a..b).map(|i| target[i].powi(2)).sum();
        num / den
    };
    let want = ((s(0, 2) + s(2, 4)) / 2.0 + s(4, 6)) / 2.0;
    assert!((weighted_sq(&pred, &target, &w) - want).abs() < 1e-12);
}

#[test]
fn gradient_matches_finite_differences() {
    let set = small_set();
    let cfg = small_cfg(0);
    let mut ckpt = init_checkpoint(&set, small_arch(), &cfg).unwrap();
    // Move B away from zero so every block receives gradient.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for v in ckpt.model.params.data_mut() {
        *v += 0.2 * rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng);
    }
    let data = TrainData::new(&set, &ckpt.model.normalizer, cfg.eps_rel).unwrap();
    let batch = data.sample(&ckpt.model.normalizer, &cfg, 0);
    let p0 = ckpt.model.params.data().to_vec();
    let (l0, g) = loss_and_grad(&ckpt.model, &p0, &batch).unwrap();
    assert!(l0 > 0.0);
    let dir: Vec<f64> = (0..p0.len()).map(|i| ((i * 7 + 3) % 11) as f64 / 11.0 - 0.5).collect();
    let h = 1e-5;
    let at = |s: f64| {
        let p: Vec<f64> = p0.iter().zip(&dir).map(|(a, d)| a + s * d).collect();
        loss_and_grad(&ckpt.model, &p, &batch).unwrap().0
    };
    let fd = (at(h) - at(-h)) / (2.0 * h);
    let ad: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
    assert!(((fd - ad) / ad).abs() < 1e-5, "fd {fd} ad {ad}");
}

#[test]
fn zero_iterations_returns_initialization() {
    let set = small_set();
    let cfg = small_cfg(0);
    let init = init_checkpoint(&set, small_arch(), &cfg).unwrap();
    let trained = pretrain(&set, small_arch(), &cfg).unwrap();
    assert_eq!(init.model.params, trained.model.params);
    assert!(trained.history.is_empty());
}

#[test]
fn training_reduces_loss_and_is_deterministic() {
    let set = small_set();
    let cfg = small_cfg(300);
    let a = pretrain(&set, small_arch(), &cfg).unwrap();
    let b = pretrain(&set, small_arch(), &cfg).unwrap();
    assert_eq!(a.model.params, b.model.params);
    assert_eq!(a.status, TrainStatus::Completed);
    let first: f64 = a.history[..20].iter().map(|e| e.loss).sum::<f64>() / 20.0;
    let last: f64 = a.history[280..].iter().map(|e| e.loss).sum::<f64>() / 20.0;
    assert!(last < 0.2 * first, "{first} -> {last}");
    let full = mean_relative_error(&a.model, &set, LossKind::Pointwise, cfg.eps_rel).unwrap();
    assert!(full <= 2.0 * last.max(a.final_loss().unwrap()), "{full} vs {last}");
}

#[test]
fn resume_matches_fresh_run() {
    let set = small_set();
    let cfg = small_cfg(40);
    let fresh = pretrain(&set, small_arch(), &cfg).unwrap();
    let half = resume(init_checkpoint(&set, small_arch(), &cfg).unwrap(), &set, 15, |_| {}).unwrap();
    let done = resume(half, &set, 40, |_| {}).unwrap();
    assert_eq!(fresh.model.params, done.model.params);
    assert_eq!(fresh.adam, done.adam);
    assert_eq!(fresh.history, done.history);
}

#[test]
fn zero_predictor_has_unit_error() {
    let set = small_set();
    let mut ckpt = init_checkpoint(&set, small_arch(), &small_cfg(0)).unwrap();
    ckpt.model.params.data_mut().fill(0.0);
    let e = mean_relative_error(&ckpt.model, &set, LossKind::Pointwise, 1e-8).unwrap();
    assert!((e - 1.0).abs() < 1e-14);
    let e = mean_relative_error(&ckpt.model, &set, LossKind::Snapshot, 1e-8).unwrap();
    assert!((e - 1.0).abs() < 1e-14);
}

#[test]
fn invalid_configs_rejected() {
    let mut c = TrainConfig::default();
    c.lr = 0.0;
    assert!(c.validate().unwrap_err().is_config());
    let mut c = TrainConfig::default();
    c.beta2 = 1.0;
    assert!(c.validate().is_err());
    let set = small_set();
    let mut a = small_arch();
    a.output_dim = 2;
    assert!(init_checkpoint(&set, a, &small_cfg(1)).is_err());
}
