use std::f64::consts::PI;

use bridgelab::action::{bridge_rate, dynamic_rate, kinetic_energy, minimize_action, recover_control, ActionObjective};
use bridgelab::functional::{Constant, IntegralPenalty, PointPenalty, SupNormSoft};
use bridgelab::simulate::uniform_grid;
use bridgelab::{exact_ot, BridgeSpec, DiffusionModel, DiscreteMarginal, MinimizeSettings, Parameterization, PathSample};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bm(x: f64, y: f64) -> BridgeSpec {
    BridgeSpec::new(DiffusionModel::brownian(0.1, 1).unwrap(), vec![x], vec![y]).unwrap()
}

/// `phi = x + t (y - x) + sum_k a_k sin(k pi t)`; for the Brownian bridge
/// `I_B = sum_k a_k^2 k^2 pi^2 / 4` by orthogonality.
fn fourier_path(times: &[f64], x: f64, y: f64, a: &[f64]) -> PathSample {
    PathSample::from_fn(times, 1, |t| {
        vec![x + t * (y - x) + a.iter().enumerate().map(|(k, c)| c * ((k + 1) as f64 * PI * t).sin()).sum::<f64>()]
    })
    .unwrap()
}

fn fourier_rate(a: &[f64]) -> f64 {
    a.iter().enumerate().map(|(k, c)| c * c * ((k + 1) as f64 * PI).powi(2) / 4.0).sum()
}

#[test]
fn brownian_rate_matches_fourier_oracle() {
    let times = uniform_grid(10_000);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let (x, y) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let a: Vec<f64> = (0..4).map(|_| rng.random_range(-0.5..0.5)).collect();
        let p = fourier_path(&times, x, y, &a);
        let spec = bm(x, y);
        let oracle = fourier_rate(&a);
        let with_g = bridge_rate(&spec, &p).unwrap();
        let closed = kinetic_energy(&p) - 0.5 * (x - y).powi(2);
        assert!((with_g - closed).abs() <= 1e-3, "{with_g} vs {closed}");
        assert!((with_g - oracle).abs() <= 1e-3);
        let without = recover_control(&spec, &p, Parameterization::WithoutG).unwrap().control.energy();
        assert!((without - kinetic_energy(&p)).abs() <= 1e-3);
    }
}

#[test]
fn ou_bridge_rate_matches_quadrature_of_the_limit_ode() {
    // nu = phi' - (b + g) = phi' - a(tau) y + c(tau) phi evaluated analytically along
    // phi = t y + s sin(pi t), then integrated by composite Simpson
    let theta: f64 = 0.8;
    let (y, s) = (0.7, 0.3);
    let phi = |t: f64| t * y + s * (PI * t).sin();
    let dphi = |t: f64| y + s * PI * (PI * t).cos();
    let nu = |t: f64| {
        let tau = 1.0 - t;
        let a = theta / (theta * tau).sinh();
        let c = theta / (theta * tau).tanh();
        dphi(t) - a * y + c * phi(t)
    };
    let m = 200_000;
    let h = (1.0 - 1e-9) / m as f64;
    let mut simpson = 0.0;
    for k in 0..=m {
        let w = if k == 0 || k == m { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        simpson += w * nu(k as f64 * h).powi(2);
    }
    let oracle = 0.5 * simpson * h / 3.0;
    let spec = BridgeSpec::new(DiffusionModel::ornstein_uhlenbeck(theta, 0.1, 1).unwrap(), vec![0.0], vec![y]).unwrap();
    let p = PathSample::from_fn(&uniform_grid(10_000), 1, |t| vec![phi(t)]).unwrap();
    let r = bridge_rate(&spec, &p).unwrap();
    assert!((r - oracle).abs() < 1e-3, "{r} vs {oracle}");
}

#[test]
fn discretized_gradient_matches_finite_differences() {
    let times = uniform_grid(60);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let models = [DiffusionModel::brownian(0.1, 1).unwrap(), DiffusionModel::ornstein_uhlenbeck(1.0, 0.1, 1).unwrap()];
    let f = PointPenalty::midpoint(vec![0.8], 100.0);
    for model in &models {
        let spec = BridgeSpec::new(model.clone(), vec![0.2], vec![-0.3]).unwrap();
        let obj = ActionObjective::new(&spec, &f, &times).unwrap();
        for _ in 0..10 {
            let z: Vec<f64> = (0..obj.n_vars()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = obj.gradient(&z).unwrap();
            let fd = obj.finite_difference_gradient(&z, 1e-5).unwrap();
            let num: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let den: f64 = fd.iter().map(|b| b * b).sum::<f64>().sqrt();
            assert!(num / den <= 1e-4, "relative error {}", num / den);
        }
    }
}

#[test]
fn gradient_of_custom_model_uses_local_differences() {
    let times = uniform_grid(30);
    let dyn_model = bridgelab::model::CustomDynamics {
        drift: std::sync::Arc::new(|_, x: &[f64]| vec![-x[0]]),
        diffusion: std::sync::Arc::new(|_, _: &[f64]| DMatrix::from_element(1, 1, 1.0)),
        transition_log_density: Some(std::sync::Arc::new(|eta, s, x: &[f64], t, y: &[f64]| {
            let h = t - s;
            let v = eta * (1.0 - (-2.0 * h).exp()) / 2.0;
            -(y[0] - (-h).exp() * x[0]).powi(2) / (2.0 * v) - 0.5 * (2.0 * PI * v).ln()
        })),
        transition_log_gradient_x: None,
        limit_cost: None,
    };
    let model = DiffusionModel::custom(dyn_model, 0.1, 1, 10.0).unwrap();
    let spec = BridgeSpec::new(model, vec![0.2], vec![-0.3]).unwrap();
    let zero = Constant(0.0);
    let obj = ActionObjective::new(&spec, &zero, &times).unwrap();
    let z: Vec<f64> = times[1..30].iter().map(|t| (2.0 * t).sin()).collect();
    let g = obj.gradient(&z).unwrap();
    let fd = obj.finite_difference_gradient(&z, 1e-5).unwrap();
    for (a, b) in g.iter().zip(&fd) {
        assert!((a - b).abs() < 1e-4 * (1.0 + b.abs()));
    }
}

#[test]
fn midpoint_penalty_matches_tent_scan() {
    let times = uniform_grid(1000);
    let spec = bm(0.0, 0.0);
    let f = PointPenalty::midpoint(vec![1.0], 100.0);
    let mut scan = f64::INFINITY;
    for k in 0..=3000 {
        let h = -1.0 + k as f64 * 1e-3;
        let tent = PathSample::from_fn(&times, 1, |t| vec![h * (1.0 - (2.0 * t - 1.0).abs())]).unwrap();
        let v = 0.5 * (h - 1.0).powi(2) + bridge_rate(&spec, &tent).unwrap();
        scan = scan.min(v);
    }
    let r = minimize_action(&spec, &f, &times, &MinimizeSettings::default()).unwrap();
    assert!((r.value - scan).abs() < 1e-3, "{} vs {scan}", r.value);
}

#[test]
fn minimum_is_stable_under_grid_refinement() {
    let model = DiffusionModel::ornstein_uhlenbeck(1.0, 0.1, 1).unwrap();
    let spec = BridgeSpec::new(model, vec![0.0], vec![0.5]).unwrap();
    let f = SupNormSoft { target: vec![-0.5], beta: 10.0, cap: 4.0 };
    let s = MinimizeSettings::default();
    let a = minimize_action(&spec, &f, &uniform_grid(4000), &s).unwrap();
    let b = minimize_action(&spec, &f, &uniform_grid(8000), &s).unwrap();
    assert!((a.value - b.value).abs() <= 5e-3, "{} vs {}", a.value, b.value);
}

#[test]
fn minimizer_tie_break_and_determinism() {
    let spec = bm(0.0, 1.0);
    let f = IntegralPenalty { target: vec![0.0], cap: 4.0 };
    let s = MinimizeSettings { n_restarts: 5, ..MinimizeSettings::default() };
    let times = uniform_grid(200);
    let a = minimize_action(&spec, &f, &times, &s).unwrap();
    let b = minimize_action(&spec, &f, &times, &s).unwrap();
    assert_eq!(a, b);
    assert!(a.converged);
}

#[test]
fn tent_sublevel_sets_are_bounded() {
    // I_B(tent_h) = 2 h^2 for x = y = 0, so {I_B <= a} holds |h| <= sqrt(a / 2)
    let spec = bm(0.0, 0.0);
    let times = uniform_grid(1000);
    let level = 0.5;
    let edge = (level / 2.0f64).sqrt();
    for (h, inside) in [(0.99 * edge, true), (1.01 * edge, false), (-0.99 * edge, true), (-1.01 * edge, false)] {
        let tent = PathSample::from_fn(&times, 1, |t| vec![h * (1.0 - (2.0 * t - 1.0).abs())]).unwrap();
        assert_eq!(bridge_rate(&spec, &tent).unwrap() <= level, inside);
    }
}

fn sqrt2_instance() -> bridgelab::ExactOt {
    let atoms = vec![vec![0.0], vec![2.0f64.sqrt()]];
    let mu = DiscreteMarginal::uniform(atoms).unwrap();
    let cost = DMatrix::from_fn(2, 2, |i, j| 0.5 * (mu.atoms[i][0] - mu.atoms[j][0]).powi(2));
    exact_ot(&cost, &mu, &mu).unwrap()
}

#[test]
fn dynamic_rate_composes_static_and_bridge_parts() {
    let ot = sqrt2_instance();
    let model = DiffusionModel::brownian(0.1, 1).unwrap();
    let times = uniform_grid(10_000);
    let r2 = 2.0f64.sqrt();
    let optimal = PathSample::from_fn(&times, 1, |_| vec![r2]).unwrap();
    let rep = dynamic_rate(&optimal, &ot, &model).unwrap();
    assert!(rep.i_d.abs() < 1e-12);
    let cross = PathSample::from_fn(&times, 1, |t| vec![r2 * t]).unwrap();
    let rep = dynamic_rate(&cross, &ot, &model).unwrap();
    assert!((rep.i_s - 1.0).abs() < 1e-12 && rep.i_b.abs() < 1e-9);
    assert_eq!(rep.i_d, rep.i_s + rep.i_b);
    let bump = PathSample::from_fn(&times, 1, |t| vec![(PI * t).sin()]).unwrap();
    let rep = dynamic_rate(&bump, &ot, &model).unwrap();
    assert!((rep.i_d - PI * PI / 4.0).abs() < 1e-3);
    let off = PathSample::from_fn(&times, 1, |t| vec![0.5 + t]).unwrap();
    assert!(matches!(dynamic_rate(&off, &ot, &model), Err(bridgelab::Error::OffSupport)));
}

#[test]
fn brownian_path_sample_is_not_absolutely_continuous() {
    let times = uniform_grid(2000);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut w = 0.0;
    let mut walk = vec![0.0];
    for _ in 0..2000 {
        w += rng.random_range(-1.0..1.0) * (1.0f64 / 2000.0).sqrt();
        walk.push(w);
    }
    let end = walk[2000];
    let p = PathSample::new(times.into(), walk, 1).unwrap();
    let rec = recover_control(&bm(0.0, end), &p, Parameterization::WithG).unwrap();
    assert!(!rec.absolutely_continuous);
    assert_eq!(bridge_rate(&bm(0.0, end), &p).unwrap(), f64::INFINITY);
}
