use super::*;
use crate::net::{build_advection_net, ArchConfig, LatentMode, Normalizer};
use crate::pde::{Grid, PdeProblem};
use crate::autodiff::LatentFunction;
use crate::pretrain::{AdamState, TrainStatus};

fn small_traj() -> (Grid, Trajectory) {
    let g = Grid::new(vec![6, 5], vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
    let data: Vec<f64> = (0..3 * 2 * 30).map(|i| (i as f64 * 0.37).sin()).collect();
    (g, Trajectory::new(vec![2e-3], vec![0.0, 0.5, 1.0], 2, 30, data).unwrap())
}

fn small_config(dir: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(PdeProblem::Burgers1d);
    c.grid = Some(vec![32]);
    c.n_times = 5;
    c.t_end = Some(0.05);
    c.scheme = Some(crate::pde::Scheme::ImplicitEuler { dt: 1e-2 });
    c.mu_count = 7;
    c.n_test = 1;
    c.n_train = Some(3);
    c.arch.depth = 4;
    c.arch.width = 6;
    c.train.iterations = 3;
    c.train.n_x = 16;
    c.train.n_t = 2;
    c.out_dir = dir.to_path_buf();
    c
}

#[test]
fn snapshot_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (g, t) = small_traj();
    let p = dir.path().join("a.snp");
    write_snapshot(&p, PdeProblem::Burgers2d, &g, &t).unwrap();
    let (h, g2, t2) = read_snapshot(&p).unwrap();
    assert_eq!((g2, &t2), (g.clone(), &t));
    assert_eq!(h.dtype, "f64");
    assert_eq!(h.layout, "t,field,row-major-x");
    let q = dir.path().join("b.snp");
    write_snapshot(&q, h.problem, &g, &t2).unwrap();
    let (a, b) = (std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
    assert_eq!(a, b);
    assert_eq!(&a[..4], b"SNP1");
    let hl = u32::from_le_bytes(a[4..8].try_into().unwrap()) as usize;
    assert_eq!(a.len() - 8 - hl, 3 * 2 * 30 * 8);
}

#[test]
fn corrupt_snapshots_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (g, t) = small_traj();
    let mut bytes = snapshot_bytes(PdeProblem::Burgers2d, &g, &t).unwrap();
    bytes.truncate(bytes.len() - 8);
    let p = dir.path().join("short.snp");
    std::fs::write(&p, &bytes).unwrap();
    assert!(matches!(read_snapshot(&p), Err(Error::Format { .. })));
    bytes[0] = b'X';
    std::fs::write(&p, &bytes).unwrap();
    assert!(matches!(read_snapshot(&p), Err(Error::Format { .. })));
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = ArchConfig::new(1, 2, LatentMode::DiagAlpha);
    a.depth = 4;
    a.width = 7;
    let norm = Normalizer::fit(&[0.0, 0.3, 1.0], &[vec![1e-3], vec![7e-3]], vec![0.0], vec![1.0]).unwrap();
    let mut model = Model::new(a, norm, 5).unwrap();
    for (i, v) in model.params.data_mut().iter_mut().enumerate() {
        *v += (i as f64 * 0.123).sin() * 0.1;
    }
    let n = model.params.len();
    let c = Checkpoint {
        model,
        config: Default::default(),
        train_mus: vec![vec![1e-3], vec![7e-3]],
        history: vec![crate::pretrain::LogEntry { step: 0, lr: 1e-3, loss: 0.5 }],
        adam: AdamState {
            m: vec![0.25; n],
            v: vec![1e-7; n],
            step: 1,
        },
        status: TrainStatus::Completed,
    };
    let p = dir.path().join("c.ckpt");
    write_checkpoint(&p, &c).unwrap();
    let r = read_checkpoint(&p).unwrap();
    assert_eq!(r.model.params, c.model.params);
    assert_eq!(r.model.normalizer, c.model.normalizer);
    assert_eq!(r.adam, c.adam);
    for &t in &[0.0, 0.37, 1.0] {
        let (pa, pb) = (c.model.latent(t, &[4e-3]), r.model.latent(t, &[4e-3]));
        assert_eq!(pa, pb);
        assert_eq!(c.model.eval(&[0.3], &pa), r.model.eval(&[0.3], &pb));
    }
    assert_eq!(checkpoint_bytes(&r).unwrap(), std::fs::read(&p).unwrap());
    assert_eq!(&std::fs::read(&p).unwrap()[..4], b"CKP1");
}

#[test]
fn config_rejects_unknown_keys_and_bad_values() {
    assert!(ExperimentConfig::from_json(r#"{"problem":"burgers1d"}"#).is_ok());
    assert!(matches!(
        ExperimentConfig::from_json(r#"{"problem":"burgers1d","bogus":1}"#),
        Err(Error::Config(_))
    ));
    assert!(ExperimentConfig::from_json(r#"{"problem":"burgers1d","train":{"lr":-1}}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"problem":"burgers1d","grid":[3]}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"problem":"burgers1d","mu_grid":[0.5,0.6]}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"problem":"heat"}"#).is_err());
}

#[test]
fn config_defaults_reproduce_the_fixed_split() {
    let c = ExperimentConfig::new(PdeProblem::Burgers1d);
    let t = c.test_values();
    assert_eq!(t.len(), 3);
    assert!((t[0] - 0.00253).abs() < 1e-12);
    assert_eq!(c.train_values().unwrap().len(), 98);
    let j = c.to_json();
    assert_eq!(ExperimentConfig::from_json(&j).unwrap(), c);
    assert_eq!(c.digest(), ExperimentConfig::from_json(&j).unwrap().digest());
    let mut d = c.clone();
    d.seed = 1;
    assert_ne!(c.digest(), d.digest());
}

#[test]
fn exported_latents_of_exact_net() {
    let m = build_advection_net(crate::pde::ADVECTION_U0);
    let csv = export_latents(&m, &[0.5, 0.75], &[0.0, 0.5, 1.0]);
    assert_eq!(csv.header.len(), 3);
    for r in &csv.rows {
        let v: Vec<f64> = r.iter().map(|s| s.parse().unwrap()).collect();
        assert_eq!(v[2], -v[1] * v[0]);
    }
    assert_eq!(csv.render(), export_latents(&m, &[0.5, 0.75], &[0.0, 0.5, 1.0]).render());
}

#[test]
fn csv_round_trip() {
    let mut c = Csv::new(&["a", "b"]);
    c.push_nums(&[0.1, 1e-300]);
    c.push_nums(&[f64::MAX, -2.5]);
    let p = Csv::parse(&c.render()).unwrap();
    assert_eq!(p, c);
    assert_eq!(p.column("b").unwrap(), vec![1e-300, -2.5]);
    assert!(Csv::parse("a,b\n1\n").is_err());
}

#[test]
fn par_map_preserves_order() {
    let v: Vec<usize> = (0..37).collect();
    let out = par_map(&v, |&i| Ok(i * i)).unwrap();
    assert_eq!(out, v.iter().map(|i| i * i).collect::<Vec<_>>());
    assert!(par_map(&v, |&i| if i == 5 { Err(Error::invalid("x")) } else { Ok(i) }).is_err());
}

#[test]
fn pipeline_stages_write_expected_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let data = generate(&cfg).unwrap();
    assert_eq!(data.train.trajectories.len(), 3);
    assert_eq!(data.test.trajectories.len(), 1);
    let again = load_or_generate(&cfg).unwrap();
    assert_eq!(again.train, data.train);
    let ck = train(&cfg).unwrap();
    assert_eq!(ck.history.len(), 3);
    let f = forecast(&cfg).unwrap();
    assert!(f.mean.is_finite());
    let pod = baseline_pod(&cfg).unwrap();
    assert_eq!(pod.len(), 10);
    let files = list_files(dir.path()).unwrap();
    for want in ["checkpoint.ckpt", "train_log.csv", "forecast_errors.csv", "baseline_pod.csv", "manifest_train.json"] {
        assert!(files.iter().any(|p| p.ends_with(want)), "{want} missing");
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("manifest_train.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_sha256"], cfg.digest());
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli::run(["colora", "frobnicate"]), 1);
    assert_eq!(cli::run(["colora", "train", "--config", "x.json", "--bogus"]), 1);
    let missing = dir.path().join("none.json");
    assert_eq!(cli::run(["colora".into(), "train".into(), "--config".into(), missing.into_os_string()]), 1);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"problem":"burgers1d","depth":3}"#).unwrap();
    assert_eq!(cli::run(["colora".into(), "generate".into(), "--config".into(), bad.into_os_string()]), 1);
    let good = dir.path().join("good.json");
    let cfg = small_config(&dir.path().join("run"));
    std::fs::write(&good, cfg.to_json()).unwrap();
    let args = |cmd: &[&str]| {
        let mut v: Vec<OsString> = vec!["colora".into()];
        v.extend(cmd.iter().map(OsString::from));
        v.extend(["--config".into(), good.clone().into_os_string()]);
        v
    };
    assert_eq!(cli::run(args(&["forecast"])), 2);
    assert_eq!(cli::run(args(&["generate"])), 0);
    assert_eq!(cli::run(args(&["baseline", "interp"])), 0);
    assert!(dir.path().join("run/baseline_interp.csv").exists());
}

use std::ffi::OsString;
