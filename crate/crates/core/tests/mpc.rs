mod common;

use nalgebra::{DMatrix, DVector};
use pcac_core::mpc::KKT_TOLERANCE;
use pcac_core::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A tracking QP from a random stable model with bounds tight enough that
/// some of them are usually active at the optimum.
fn random_qp(rng: &mut ChaCha8Rng, inputs: usize, horizon: usize) -> QpProblem {
    let (n, p) = (2, 1);
    let dims = ArxDims::new(n, inputs, p).unwrap();
    let theta = common::stable_theta(rng, n, inputs, p, 0.95);
    let model = realize(&theta, dims).unwrap();
    let pm = build_prediction(&model, horizon).unwrap();
    let w = MpcWeights::diagonal(horizon, &[1.0], &[2.0], &vec![0.05; inputs], DMatrix::identity(1, 1))
        .unwrap();
    let u_abs: Vec<f64> = (0..inputs).map(|_| rng.random_range(0.2..1.0)).collect();
    let du_abs: Vec<f64> = (0..inputs).map(|_| rng.random_range(0.05..0.5)).collect();
    let lim = SaturationLimits::symmetric(&u_abs, &du_abs).unwrap();
    let u_prev = DVector::from_fn(inputs, |i, _| rng.random_range(-u_abs[i]..u_abs[i]));
    let x1 = DVector::from_fn(n * p, |_, _| rng.random_range(-1.0..1.0));
    let commands = DVector::from_fn(horizon, |_, _| rng.random_range(-3.0..3.0));
    assemble_qp(&pm, &x1, &commands, &w, &lim, &u_prev).unwrap()
}

#[test]
fn active_set_matches_face_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut constrained = 0;
    for trial in 0..200 {
        let (inputs, horizon) = if trial % 2 == 0 { (1, 3) } else { (2, 2) };
        let qp = random_qp(&mut rng, inputs, horizon);
        let sol = solve_qp(&qp).unwrap();
        let oracle = common::qp_by_face_enumeration(&qp);
        let (got, want) = (qp.objective(&sol.u), qp.objective(&oracle));
        assert!(got <= want + 1e-9 * (1.0 + want.abs()), "trial {trial}: {got} vs {want}");
        assert!((&sol.u - &oracle).amax() < 1e-6, "trial {trial}");
        if !sol.active.is_empty() {
            constrained += 1;
        }
    }
    assert!(constrained > 100, "only {constrained} trials had active bounds");
}

#[test]
fn warm_started_sequence_matches_cold_solves() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut solver = ActiveSetSolver::new();
    for _ in 0..100 {
        let qp = random_qp(&mut rng, 2, 3);
        let warm = solver.solve(&qp).unwrap();
        let cold = solve_qp(&qp).unwrap();
        assert!((&warm.u - &cold.u).amax() < 1e-8);
    }
}

#[test]
fn prediction_matches_explicit_matrix_powers() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let dims = ArxDims::new(2, 2, 2).unwrap();
    let model = realize(&common::stable_theta(&mut rng, 2, 2, 2, 0.9), dims).unwrap();
    let horizon = 5;
    let pm = build_prediction(&model, horizon).unwrap();
    let (p, m) = (2, 2);
    let mut power = DMatrix::identity(4, 4);
    for i in 0..horizon {
        // Block row i is C A^i for the free response and C A^(i-1-j) B below the diagonal.
        assert!((pm.gamma.rows(i * p, p) - &model.c * &power).amax() < 1e-12);
        for j in 0..horizon {
            let block = pm.toeplitz.view((i * p, j * m), (p, m));
            if j >= i {
                assert!(block.iter().all(|&v| v == 0.0));
            } else {
                let mut a_pow = DMatrix::identity(4, 4);
                for _ in 0..(i - 1 - j) {
                    a_pow = &model.a * a_pow;
                }
                assert!((block - &model.c * a_pow * &model.b).amax() < 1e-12);
            }
        }
        power = &model.a * power;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn solution_is_feasible_certified_and_no_worse_than_holding(seed in 0u64..100_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let qp = random_qp(&mut rng, 2, 4);
        let hold = qp.zero_move();
        prop_assert_eq!(qp.max_violation(&hold), 0.0);
        let sol = solve_qp(&qp).unwrap();
        prop_assert!(qp.max_violation(&sol.u) <= 1e-12);
        prop_assert!(sol.residuals.max() <= KKT_TOLERANCE);
        prop_assert!(qp.objective(&sol.u) <= qp.objective(&hold) + 1e-12);
    }

    #[test]
    fn first_move_respects_actuator_limits(seed in 0u64..100_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let qp = random_qp(&mut rng, 1, 5);
        let sol = solve_qp(&qp).unwrap();
        let first = sol.first_control();
        // The first magnitude row bounds u_{k|1}; the first move-size row
        // bounds it to u_prev + [du_min, du_max].
        for row in [&qp.constraints[0], &qp.constraints[5]] {
            prop_assert!(first[0] >= row.lower - 1e-12 && first[0] <= row.upper + 1e-12);
        }
        prop_assert!(qp.constraints[5].lower <= qp.u_prev[0] && qp.u_prev[0] <= qp.constraints[5].upper);
    }
}
