use super::*;
use crate::autodiff::Real;
use crate::net::{build_advection_net, hyper_eval, net_eval, ArchConfig, LatentMode, Normalizer};
use crate::pde::ADVECTION_U0;
use proptest::prelude::*;
use rand::Rng;
use std::f64::consts::PI;

struct Fourier;

impl LatentFunction for Fourier {
    fn input_dim(&self) -> usize {
        1
    }
    fn latent_dim(&self) -> usize {
        2
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn eval_generic<T: Real>(&self, x: &[T], phi: &[T], out: &mut [T]) {
        out[0] = phi[0] * x[0].sin() + phi[1] * x[0].cos();
    }
}

struct Constant;

impl LatentFunction for Constant {
    fn input_dim(&self) -> usize {
        1
    }
    fn latent_dim(&self) -> usize {
        2
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn eval_generic<T: Real>(&self, x: &[T], phi: &[T], out: &mut [T]) {
        out[0] = x[0].sin() + phi[0] * 0.0;
    }
}

struct Heat;

impl PointRhs for Heat {
    fn dim(&self) -> usize {
        1
    }
    fn n_fields(&self) -> usize {
        1
    }
    fn eval(&self, _x: &[f64], s: &Local, out: &mut [f64]) {
        out[0] = s.d2u[0][0];
    }
}

struct Transport;

impl PointRhs for Transport {
    fn dim(&self) -> usize {
        1
    }
    fn n_fields(&self) -> usize {
        1
    }
    fn eval(&self, _x: &[f64], s: &Local, out: &mut [f64]) {
        out[0] = s.du[0][0];
    }
}

fn circle(n: usize) -> Samples {
    Samples::new(&[0.0], &[2.0 * PI], Sampling::Grid { per_axis: n }).unwrap()
}

fn tight() -> NgConfig {
    NgConfig {
        rtol: 1e-11,
        atol: 1e-12,
        ..NgConfig::for_problem(PdeProblem::Advection)
    }
}

fn random_model(q: usize, seed: u64) -> Model {
    let mut a = ArchConfig::new(1, q, LatentMode::DiagAlpha);
    a.depth = 4;
    a.width = 8;
    let mut m = Model::new(a, Normalizer::identity(1, 1), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 7);
    for v in m.params.data_mut() {
        if *v == 0.0 {
            *v = rng.gen_range(-0.5..0.5);
        }
    }
    m
}

#[test]
fn heat_equation_latent_velocity_is_exact() {
    let s = circle(64);
    let phi = [0.7, -1.3];
    let (j, f) = ng_assemble(&Fourier, &phi, &s.points, &Heat).unwrap();
    for (x, fk) in s.points.iter().zip(&f) {
        let exact = -phi[0] * x[0].sin() - phi[1] * x[0].cos();
        assert!((fk - exact).abs() < 1e-14);
    }
    let step = ng_rhs(&j, &f, None, 1e-10).unwrap();
    assert!((step.phi_dot[0] + 0.7).abs() < 1e-10 && (step.phi_dot[1] - 1.3).abs() < 1e-10);
    assert!(step.residual < 1e-12);
}

#[test]
fn transport_latent_velocity_is_a_rotation() {
    let s = circle(64);
    let phi = [0.4, 2.0];
    let (j, f) = ng_assemble(&Fourier, &phi, &s.points, &Transport).unwrap();
    let step = ng_rhs(&j, &f, None, 1e-10).unwrap();
    assert!((step.phi_dot[0] + phi[1]).abs() < 1e-10);
    assert!((step.phi_dot[1] - phi[0]).abs() < 1e-10);
}

#[test]
fn integrated_latents_match_closed_form() {
    let s = circle(32);
    let times = crate::pde::linspace(0.0, 1.0, 11);
    let phi0 = [0.7, -1.3];
    let heat = integrate_latent(&Fourier, &Heat, &s, &phi0, &times, &tight()).unwrap();
    let rot = integrate_latent(&Fourier, &Transport, &s, &phi0, &times, &tight()).unwrap();
    for (k, &t) in times.iter().enumerate() {
        let d = (-t).exp();
        assert!((heat.phi[k][0] - phi0[0] * d).abs() < 1e-7);
        assert!((heat.phi[k][1] - phi0[1] * d).abs() < 1e-7);
        let (c, sn) = (t.cos(), t.sin());
        assert!((rot.phi[k][0] - (phi0[0] * c - phi0[1] * sn)).abs() < 1e-7);
        assert!((rot.phi[k][1] - (phi0[0] * sn + phi0[1] * c)).abs() < 1e-7);
    }
    assert!(heat.residuals.iter().all(|r| *r < 1e-10));
}

#[test]
fn zero_length_span_returns_initial_state() {
    let s = circle(16);
    let lt = integrate_latent(&Fourier, &Heat, &s, &[1.0, 2.0], &[0.3], &tight()).unwrap();
    assert_eq!(lt.phi, vec![vec![1.0, 2.0]]);
    assert_eq!(lt.steps, 0);
}

#[test]
fn exact_advection_network_is_integrated_exactly() {
    let m = build_advection_net(ADVECTION_U0);
    let cfg = NgConfig {
        rtol: 1e-10,
        atol: 1e-10,
        ..NgConfig::for_problem(PdeProblem::Advection)
    };
    let times = crate::pde::linspace(0.0, 1.0, 6);
    for mu in [0.5, 0.8] {
        let lt = integrate_eq(&m, PdeProblem::Advection, &[mu], &times, &cfg).unwrap();
        for (t, phi) in lt.times.iter().zip(&lt.phi) {
            assert!((phi[0] + t * mu).abs() < 1e-8, "t={t}");
        }
        let xs = Matrix::from_cols(&[crate::pde::linspace(0.0, 0.99, 100)]).unwrap();
        let tr = decode(&m, &[mu], &lt, &xs).unwrap();
        for (k, &t) in times.iter().enumerate() {
            for (i, u) in tr.field(k, 0).iter().enumerate() {
                let exact = ADVECTION_U0.apply(xs[(i, 0)] - t * mu);
                assert!((u - exact).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn dead_latent_is_flagged_degenerate() {
    let mut a = ArchConfig::new(1, 2, LatentMode::DiagAlpha);
    a.depth = 4;
    a.width = 6;
    let m = Model::new(a, Normalizer::identity(1, 1), 3).unwrap();
    let s = Samples::new(&[0.0], &[1.0], Sampling::Grid { per_axis: 16 }).unwrap();
    let rhs = ProblemRhs {
        problem: PdeProblem::Burgers1d,
        mu: vec![5e-3],
    };
    let (j, f) = ng_assemble(&m, &[0.3, -0.2], &s.points, &rhs).unwrap();
    assert_eq!(j.max_abs(), 0.0);
    let step = ng_rhs(&j, &f, None, 1e-10).unwrap();
    assert!(step.degenerate);
    assert_eq!(step.phi_dot, vec![0.0, 0.0]);
}

#[test]
fn zero_mean_basis_gives_vacuous_constraint() {
    let s = circle(32);
    let c = conserve_mass_constraint(&Fourier, &[0.2, 0.1], &s.points, &s.weights);
    assert!(c.max_abs() < 1e-13);
}

#[test]
fn mass_constraint_is_derivative_of_mass() {
    let m = random_model(3, 11);
    let s = Samples::new(&[0.0], &[1.0], Sampling::Grid { per_axis: 40 }).unwrap();
    let phi = [0.3, -0.4, 0.2];
    let c = conserve_mass_constraint(&m, &phi, &s.points, &s.weights);
    for j in 0..3 {
        let h = 1e-6;
        let (mut p, mut q) = (phi, phi);
        p[j] += h;
        q[j] -= h;
        let fd = (mass(&m, &p, &s.points, &s.weights)[0] - mass(&m, &q, &s.points, &s.weights)[0]) / (2.0 * h);
        assert!((fd - c[(0, j)]).abs() < 1e-7 * c[(0, j)].abs().max(1.0));
    }
}

#[test]
fn conserving_integration_keeps_mass() {
    let m = random_model(3, 5);
    let rhs = ProblemRhs {
        problem: PdeProblem::Burgers1d,
        mu: vec![5e-3],
    };
    let s = Samples::new(&[0.0], &[1.0], Sampling::Grid { per_axis: 32 }).unwrap();
    let phi0 = [0.3, -0.4, 0.2];
    let times = crate::pde::linspace(0.0, 0.3, 4);
    let base = NgConfig::for_problem(PdeProblem::Burgers1d);
    let on = integrate_latent(&m, &rhs, &s, &phi0, &times, &NgConfig { conserve_mass: true, ..base }).unwrap();
    let off = integrate_latent(&m, &rhs, &s, &phi0, &times, &base).unwrap();
    let m0 = mass(&m, &phi0, &s.points, &s.weights)[0];
    let drift = |lt: &LatentTrajectory| {
        lt.phi
            .iter()
            .map(|p| ((mass(&m, p, &s.points, &s.weights)[0] - m0) / m0).abs())
            .fold(0.0f64, f64::max)
    };
    assert!(drift(&on) < 1e-12, "{}", drift(&on));
    assert!(drift(&off) > drift(&on));
    assert!(on.max_constraint < 1e-12);
    assert_eq!(off.max_constraint, 0.0);
}

#[test]
fn landscape_has_lattice_shape_and_is_flat_for_constant_net() {
    let s = circle(16);
    let a0 = [-1.0, 0.0, 1.0];
    let a1 = [0.5, 2.0];
    let l = residual_landscape(&Constant, &Heat, &s, &a0, &a1, 1e-10).unwrap();
    assert_eq!(l.shape(), (3, 2));
    for v in l.data() {
        assert!((v - l[(0, 0)]).abs() < 1e-15);
    }
    let m3 = random_model(3, 1);
    assert!(residual_landscape(&m3, &Heat, &s, &a0, &a1, 1e-10).is_err());
}

#[test]
fn forecast_composes_hyper_and_net() {
    let m = random_model(2, 4);
    let xs = Matrix::from_cols(&[vec![0.1, 0.45, 0.9]]).unwrap();
    let times = [0.0, 0.5];
    let tr = forecast_d(&m, &[0.3], &times, &xs).unwrap();
    for (k, &t) in times.iter().enumerate() {
        let phi = hyper_eval(&m, t, &[0.3]).unwrap();
        for i in 0..3 {
            let u = net_eval(&m, &[xs[(i, 0)]], &phi).unwrap()[0];
            assert!((tr.field(k, 0)[i] - u).abs() < 1e-13);
        }
    }
}

#[test]
fn integration_is_deterministic() {
    let m = random_model(2, 9);
    let rhs = ProblemRhs {
        problem: PdeProblem::Burgers1d,
        mu: vec![2e-3],
    };
    let s = Samples::new(&[0.0], &[1.0], Sampling::Uniform { count: 30, seed: 1 }).unwrap();
    let cfg = NgConfig::for_problem(PdeProblem::Burgers1d);
    let times = [0.0, 0.1, 0.2];
    let a = integrate_latent(&m, &rhs, &s, &[0.1, 0.2], &times, &cfg).unwrap();
    let b = integrate_latent(&m, &rhs, &s, &[0.1, 0.2], &times, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn fit_recovers_latent_of_linear_model() {
    let s = circle(20);
    let target: Vec<f64> = s.points.iter().map(|x| 0.5 * x[0].sin() - 2.0 * x[0].cos()).collect();
    let phi = fit_latent(&Fourier, &[0.0, 0.0], &s.points, &target, 5).unwrap();
    assert!((phi[0] - 0.5).abs() < 1e-12 && (phi[1] + 2.0).abs() < 1e-12);
}

#[test]
fn ng_config_validation() {
    let mut c = NgConfig::for_problem(PdeProblem::Burgers2d);
    assert_eq!(c.sampling, Sampling::Grid { per_axis: 64 });
    c.validate().unwrap();
    c.rtol = 0.0;
    assert!(c.validate().is_err());
    let bad = NgConfig {
        sampling: Sampling::Grid { per_axis: 2 },
        ..NgConfig::for_problem(PdeProblem::Rde)
    };
    assert!(bad.validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn galerkin_residual_is_orthogonal_to_tangent_space(seed in 0u64..500, a in -1.0..1.0f64, b in -1.0..1.0f64) {
        let m = random_model(2, seed);
        let s = Samples::new(&[0.0], &[1.0], Sampling::Grid { per_axis: 24 }).unwrap();
        let rhs = ProblemRhs { problem: PdeProblem::Burgers1d, mu: vec![4e-3] };
        let (j, f) = ng_assemble(&m, &[a, b], &s.points, &rhs).unwrap();
        let step = ng_rhs(&j, &f, None, 1e-10).unwrap();
        let r: Vec<f64> = j.matvec(&step.phi_dot).unwrap().iter().zip(&f).map(|(x, y)| x - y).collect();
        let jtr = norm2(&j.tr_matvec(&r).unwrap());
        let jtf = norm2(&j.tr_matvec(&f).unwrap());
        prop_assert!(jtr <= 1e-8 * jtf.max(1e-300));
    }

    #[test]
    fn uniform_row_scaling_leaves_velocity_unchanged(seed in 0u64..500, w in 0.01..100.0f64) {
        let m = random_model(2, seed);
        let s = Samples::new(&[0.0], &[1.0], Sampling::Grid { per_axis: 24 }).unwrap();
        let rhs = ProblemRhs { problem: PdeProblem::Advection, mu: vec![0.7] };
        let (j, f) = ng_assemble(&m, &[0.2, -0.1], &s.points, &rhs).unwrap();
        let a = ng_rhs(&j, &f, None, 1e-10).unwrap();
        let fs: Vec<f64> = f.iter().map(|v| v * w).collect();
        let b = ng_rhs(&j.scale(w), &fs, None, 1e-10).unwrap();
        for (x, y) in a.phi_dot.iter().zip(&b.phi_dot) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn consistent_systems_are_solved_exactly(p0 in -2.0..2.0f64, p1 in -2.0..2.0f64, v0 in -1.0..1.0f64, v1 in -1.0..1.0f64) {
        let s = circle(16);
        let j = jac_latent(&Fourier, &[p0, p1], &s.points);
        let f = j.matvec(&[v0, v1]).unwrap();
        let step = ng_rhs(&j, &f, None, 1e-10).unwrap();
        prop_assert!(step.residual < 1e-10 * norm2(&f).max(1e-300));
    }
}
