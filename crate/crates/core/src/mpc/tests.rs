use nalgebra::{DMatrix, DVector};

use super::*;
use crate::actuation::SaturationLimits;
use crate::bocf::realize;
use crate::rls::ArxDims;

/// Scalar model with C B = 1 and C A x1 = 0 for x1 = 0.
fn scalar_instance(u_max: f64) -> QpProblem {
    let dims = ArxDims::new(1, 1, 1).unwrap();
    let r = realize(&DVector::from_column_slice(&[0.3, 1.0]), dims).unwrap();
    let pm = build_prediction(&r, 2).unwrap();
    let w = MpcWeights::diagonal(2, &[1.0], &[1.0], &[0.01], DMatrix::identity(1, 1)).unwrap();
    let lim = SaturationLimits::new(
        DVector::from_element(1, -10.0),
        DVector::from_element(1, u_max),
        DVector::from_element(1, -10.0),
        DVector::from_element(1, 10.0),
    )
    .unwrap();
    assemble_qp(
        &pm,
        &DVector::zeros(1),
        &DVector::from_column_slice(&[0.7, 1.0]),
        &w,
        &lim,
        &DVector::zeros(1),
    )
    .unwrap()
}

#[test]
fn two_step_scalar_optimum() {
    let qp = scalar_instance(10.0);
    let sol = solve_qp(&qp).unwrap();
    assert!((sol.u[0] - 1.0 / 1.01).abs() < 1e-9, "{}", sol.u[0]);
    assert!((sol.u[1] - 1.0 / 1.01).abs() < 1e-9);
    assert!((sol.first_control()[0] - 0.990099).abs() < 1e-6);
    assert!(sol.active.is_empty());
    assert!(sol.residuals.max() <= KKT_TOLERANCE);
}

#[test]
fn two_step_scalar_with_active_upper_bound() {
    let qp = scalar_instance(0.5);
    let sol = solve_qp(&qp).unwrap();
    assert!((sol.u[0] - 0.5).abs() < 1e-12);
    assert!((sol.u[1] - 0.5).abs() < 1e-12);
    assert!(sol
        .active
        .iter()
        .all(|a| a.side == BoundSide::Upper && a.index < 2));
    assert!(sol.residuals.max() <= KKT_TOLERANCE);
}

#[test]
fn objective_matches_direct_cost() {
    let qp = scalar_instance(10.0);
    let u = DVector::from_column_slice(&[0.4, -0.2]);
    // y_{k|1} = 0, y_{k|2} = u1; commands (0.7, 1.0); moves (u1 - 0, u2 - u1)
    let direct = 0.7f64.powi(2) + (0.4f64 - 1.0).powi(2) + 0.01 * (0.4f64.powi(2) + 0.6f64.powi(2));
    assert!((qp.objective(&u) - direct).abs() < 1e-14);
}

#[test]
fn horizon_one_holds_the_last_control() {
    let dims = ArxDims::new(2, 1, 1).unwrap();
    let r = realize(&DVector::from_column_slice(&[0.5, 0.1, 1.0, 0.3]), dims).unwrap();
    let pm = build_prediction(&r, 1).unwrap();
    let w = MpcWeights::diagonal(1, &[1.0], &[2.0], &[0.1], DMatrix::identity(1, 1)).unwrap();
    let lim = SaturationLimits::symmetric(&[5.0], &[1.0]).unwrap();
    let u_prev = DVector::from_element(1, 1.25);
    let qp = assemble_qp(
        &pm,
        &DVector::from_column_slice(&[1.0, -1.0]),
        &DVector::from_element(1, 3.0),
        &w,
        &lim,
        &u_prev,
    )
    .unwrap();
    let sol = solve_qp(&qp).unwrap();
    assert!((sol.first_control()[0] - 1.25).abs() < 1e-12);
    assert_eq!(first_control(&sol.u, 1).len(), 1);
}

#[test]
fn free_response_on_target_gives_zero_cost_hold() {
    let dims = ArxDims::new(2, 2, 2).unwrap();
    let theta = DVector::from_fn(dims.theta_len(), |i, _| 0.05 * (i as f64 + 1.0).sin());
    let r = realize(&theta, dims).unwrap();
    let horizon = 5;
    let pm = build_prediction(&r, horizon).unwrap();
    let x1 = DVector::from_column_slice(&[0.3, -0.2, 0.1, 0.4]);
    let c_t = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
    let commands = DVector::from_iterator(
        horizon,
        (0..horizon).map(|i| (&pm.gamma * &x1)[i * 2 + 1]),
    );
    let w = MpcWeights::diagonal(horizon, &[1.0], &[1.0], &[0.5, 0.5], c_t).unwrap();
    let lim = SaturationLimits::symmetric(&[1.0, 1.0], &[0.2, 0.2]).unwrap();
    let qp = assemble_qp(&pm, &x1, &commands, &w, &lim, &DVector::zeros(2)).unwrap();
    let sol = solve_qp(&qp).unwrap();
    assert!(sol.u.amax() < 1e-10);
    assert!(sol.objective.abs() < 1e-12);
}

#[test]
fn unconstrained_solution_matches_direct_solve() {
    let n = 6;
    let m = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
    let h = &m * m.transpose() + DMatrix::identity(n, n);
    let g = DVector::from_fn(n, |i, _| (i as f64) - 2.5);
    let qp = QpProblem::new(h.clone(), g.clone(), 0.0, vec![], DVector::zeros(1), n).unwrap();
    let sol = solve_qp(&qp).unwrap();
    let direct = -h.cholesky().unwrap().solve(&g);
    assert!((sol.u - direct).amax() < 1e-12);
}

#[test]
fn hessian_is_symmetric_after_assembly() {
    let dims = ArxDims::new(3, 2, 2).unwrap();
    let theta = DVector::from_fn(dims.theta_len(), |i, _| 0.2 * ((i * i) as f64).cos());
    let r = realize(&theta, dims).unwrap();
    let pm = build_prediction(&r, 8).unwrap();
    let w = MpcWeights::diagonal(8, &[0.1, 2.0], &[3.0, 1.0], &[0.01, 0.2], DMatrix::identity(2, 2))
        .unwrap();
    let lim = SaturationLimits::symmetric(&[1.0, 2.0], &[0.5, 0.5]).unwrap();
    let qp = assemble_qp(
        &pm,
        &DVector::from_element(6, 0.1),
        &DVector::from_element(16, 1.0),
        &w,
        &lim,
        &DVector::zeros(2),
    )
    .unwrap();
    assert!((&qp.hessian - qp.hessian.transpose()).amax() <= 1e-12);
    assert_eq!(qp.constraints.len(), 2 * 8 * 2);
    assert_eq!(qp.max_violation(&qp.zero_move()), 0.0);
}

#[test]
fn weights_must_be_positive_definite() {
    let c_t = DMatrix::identity(1, 1);
    assert!(MpcWeights::diagonal(3, &[0.0], &[1.0], &[1.0], c_t.clone()).is_err());
    assert!(MpcWeights::diagonal(3, &[1.0], &[-1.0], &[1.0], c_t.clone()).is_err());
    assert!(MpcWeights::diagonal(3, &[1.0], &[1.0], &[0.0], c_t.clone()).is_err());
    assert!(MpcWeights::diagonal(3, &[1.0], &[1.0], &[1.0], c_t).is_ok());
}

#[test]
fn assembly_rejects_shape_mismatch() {
    let dims = ArxDims::new(1, 1, 1).unwrap();
    let r = realize(&DVector::from_column_slice(&[0.3, 1.0]), dims).unwrap();
    let pm = build_prediction(&r, 3).unwrap();
    let w = MpcWeights::diagonal(3, &[1.0], &[1.0], &[1.0], DMatrix::identity(1, 1)).unwrap();
    let lim = SaturationLimits::symmetric(&[1.0], &[1.0]).unwrap();
    let x1 = DVector::zeros(1);
    assert!(assemble_qp(&pm, &x1, &DVector::zeros(2), &w, &lim, &DVector::zeros(1)).is_err());
    let w2 = MpcWeights::diagonal(2, &[1.0], &[1.0], &[1.0], DMatrix::identity(1, 1)).unwrap();
    assert!(assemble_qp(&pm, &x1, &DVector::zeros(3), &w2, &lim, &DVector::zeros(1)).is_err());
}

#[test]
fn warm_start_reaches_the_same_optimum() {
    let qp = scalar_instance(0.5);
    let mut solver = ActiveSetSolver::new();
    let first = solver.solve(&qp).unwrap();
    let second = solver.solve(&qp).unwrap();
    assert!((first.u - second.u).amax() < 1e-12);
}
