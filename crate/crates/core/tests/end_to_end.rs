//! Checks that need a trained 1D Burgers checkpoint. One model is trained
//! and shared by all of them.

use colora::harness::{self, ExperimentConfig, Landscape};
use colora::pde::PdeProblem;
use colora::pretrain::Checkpoint;

fn config(dir: &std::path::Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(PdeProblem::Burgers1d);
    c.mu_grid = Some(vec![0.001, 0.00199, 0.00298, 0.00397, 0.00496, 0.00595, 0.00694, 0.00793, 0.00892, 0.01]);
    c.test_mus = Some(vec![0.00397, 0.00793]);
    c.n_times = 51;
    c.train.iterations = 3000;
    c.train.n_x = 128;
    c.train.n_t = 8;
    c.bench.lattice = 21;
    c.out_dir = dir.to_path_buf();
    c
}

fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[((v.len() - 1) as f64 * p).round() as usize]
}

fn eq_error_is_close_to_d_error(cfg: &ExperimentConfig, ckpt: &Checkpoint, data: &harness::Dataset) {
    let d = harness::error_of(cfg, &data.test, &harness::forecast_set(&ckpt.model, &data.test).unwrap());
    let ng = cfg.ng_config();
    let eq: Vec<Vec<f64>> = data
        .test
        .trajectories
        .iter()
        .map(|t| harness::eq_trajectory(&ckpt.model, &data.test, t, &ng).unwrap().1.fields)
        .collect();
    let eq = harness::error_of(cfg, &data.test, &eq);
    eprintln!("CoLoRA-D {d:.3e}, CoLoRA-EQ {eq:.3e}");
    assert!(d < 1e-2, "{d}");
    assert!(eq <= 5.0 * d, "EQ {eq} vs D {d}");
}

fn trajectory_lies_in_low_residual_region(l: &Landscape) {
    let lattice: Vec<f64> = (0..l.residual.rows())
        .flat_map(|i| (0..l.residual.cols()).map(move |j| (i, j)))
        .map(|(i, j)| l.residual[(i, j)])
        .collect();
    let p10 = percentile(&lattice, 0.1);
    let on_path: Vec<f64> = l.trajectory.iter().map(|(_, r)| *r).collect();
    let median = percentile(&on_path, 0.5);
    eprintln!("median residual on trajectory {median:.3e}, lattice 10th percentile {p10:.3e}");
    assert!(median < p10);
}

fn interpolation_improves_with_more_data(cfg: &ExperimentConfig) {
    let mut c = cfg.clone();
    c.mu_grid = None;
    c.test_mus = None;
    c.mu_count = 41;
    let all = harness::solve_all(&c, &c.mu_candidates()).unwrap();
    let test = all.subset(&c.test_values()).unwrap();
    let errs: Vec<f64> = [2, 4, 10, 20, 38]
        .iter()
        .map(|&m| {
            let train = all.subset(&c.train_values_for(m).unwrap()).unwrap();
            harness::error_of(&c, &test, &harness::interp_set(&train, &test).unwrap())
        })
        .collect();
    eprintln!("interpolation errors {errs:?}");
    for w in errs.windows(2) {
        assert!(w[1] <= w[0] * 1.05, "{errs:?}");
    }
    assert!(errs[errs.len() - 1] < 1e-2 * errs[0]);
}

#[test]
fn trained_burgers_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let data = harness::load_or_generate(&cfg).unwrap();
    let ckpt = harness::train(&cfg).unwrap();
    eq_error_is_close_to_d_error(&cfg, &ckpt, &data);
    trajectory_lies_in_low_residual_region(&harness::landscape(&cfg).unwrap());
    interpolation_improves_with_more_data(&cfg);
}
