mod common;

use nalgebra::{DMatrix, DVector};
use pcac_core::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn siso_config(order: usize, horizon: usize, u_abs: f64, du_abs: f64) -> PcacConfig {
    PcacConfig {
        name: "siso".into(),
        dims: ArxDims::new(order, 1, 1).unwrap(),
        horizon,
        weights: MpcWeights::diagonal(horizon, &[1.0], &[1.0], &[0.1], DMatrix::identity(1, 1)).unwrap(),
        limits: SaturationLimits::symmetric(&[u_abs], &[du_abs]).unwrap(),
        theta0_scale: 0.01,
        psi0_scale: 1e5,
        initial_theta: None,
        forgetting: ForgettingConfig::disabled(),
        dither: None,
        output_map: vec![0],
        input_map: vec![0],
    }
}

/// Drives a discrete ARX plant with the controller, using the same timing as
/// the sampled-data runner: the control computed at step k acts from k + 1.
fn run_on_arx(
    ctrl: &mut PcacController,
    theta: &DVector<f64>,
    command: impl Fn(usize) -> f64,
    steps: usize,
) -> Vec<(f64, f64, f64)> {
    let dims = ctrl.config().dims;
    let horizon = ctrl.config().horizon;
    let lim = ctrl.config().limits.clone();
    let mut plant = IoHistory::new(dims);
    let mut out = Vec::with_capacity(steps);
    for k in 0..steps {
        let y = build_regressor(&plant) * theta;
        let preview = DVector::from_fn(horizon, |i, _| command(k + i + 1));
        let step = ctrl.step(&y, &preview).unwrap();
        let u = apply_actuation(&step.u_req, ctrl.applied(), &lim).unwrap();
        let held = ctrl.applied().clone();
        ctrl.commit(u.clone()).unwrap();
        plant.push(y.clone(), held).unwrap();
        out.push((command(k), y[0], u[0]));
    }
    out
}

#[test]
fn cold_start_learns_to_track_a_known_arx_plant() {
    // y_k = 1.2 y_{k-1} - 0.5 y_{k-2} + 0.8 u_{k-1} + 0.3 u_{k-2}
    let theta = DVector::from_column_slice(&[-1.2, 0.5, 0.8, 0.3]);
    let mut ctrl = PcacController::new(siso_config(2, 20, 10.0, 1.0)).unwrap();
    let log = run_on_arx(&mut ctrl, &theta, |k| if k < 50 { 0.0 } else { 1.0 }, 400);
    let tail = log[300..].iter().map(|(r, y, _)| (r - y).abs()).fold(0.0, f64::max);
    assert!(tail < 1e-3, "steady tracking error {tail}");
    assert!((&ctrl.estimate().theta - &theta).amax() < 1e-3);
}

#[test]
fn known_model_needs_no_learning_transient() {
    let theta = DVector::from_column_slice(&[-1.2, 0.5, 0.8, 0.3]);
    let mut cfg = siso_config(2, 20, 10.0, 1.0);
    cfg.initial_theta = Some(theta.clone());
    let mut ctrl = PcacController::new(cfg).unwrap();
    let log = run_on_arx(&mut ctrl, &theta, |_| 1.0, 200);
    // Starting at rest below the command the output never overshoots much.
    let overshoot = log.iter().map(|(_, y, _)| y - 1.0).fold(0.0, f64::max);
    assert!(overshoot < 0.2, "overshoot {overshoot}");
    assert!((log[199].1 - 1.0).abs() < 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn implemented_controls_always_respect_the_limits(
        seed in 0u64..10_000,
        u_abs in 0.1f64..5.0,
        du_abs in 0.01f64..1.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = common::stable_theta(&mut rng, 2, 1, 1, 0.98);
        let mut ctrl = PcacController::new(siso_config(2, 10, u_abs, du_abs)).unwrap();
        let levels: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
        let log = run_on_arx(&mut ctrl, &theta, |k| levels[(k / 40) % 4], 160);
        let mut prev = 0.0;
        for (_, _, u) in log {
            prop_assert!(u.abs() <= u_abs);
            prop_assert!((u - prev).abs() <= du_abs);
            prev = u;
        }
    }
}
