//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pcac_core::mpc::{BoundSide, QpProblem};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Composite Simpson rule with `panels` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels + panels % 2;
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

/// Log of the Beta(a, b) density at its mode, up to the normalizing
/// constant, so the integrands below are O(1) for large shape parameters.
fn log_beta_peak(a: f64, b: f64) -> f64 {
    let mode = if a > 1.0 && b > 1.0 { (a - 1.0) / (a + b - 2.0) } else { 0.5 };
    (a - 1.0) * mode.ln() + (b - 1.0) * (1.0 - mode).ln()
}

/// `2 s^(2a-1) (1-s^2)^(b-1)`, the density after `t = s^2`, finite at
/// `s = 0` whenever `a >= 1/2`.
fn substituted_density(a: f64, b: f64, s: f64, log_peak: f64) -> f64 {
    let rest = 1.0 - s * s;
    if rest <= 0.0 {
        return if b == 1.0 { 2.0 * s.powf(2.0 * a - 1.0) * (-log_peak).exp() } else { 0.0 };
    }
    2.0 * s.powf(2.0 * a - 1.0) * ((b - 1.0) * rest.ln() - log_peak).exp()
}

/// `int_0^z` of the scaled density, with `t = s^2` removing the `t^(a-1)`
/// endpoint singularity for `a < 1`.
fn beta_mass_below(a: f64, b: f64, z: f64, panels: usize) -> f64 {
    let peak = log_beta_peak(a, b);
    simpson(|s| substituted_density(a, b, s, peak), 0.0, z.sqrt(), panels)
}

/// `int_z^1`, with `t = 1 - s^2` for the `(1-t)^(b-1)` end.
fn beta_mass_above(a: f64, b: f64, z: f64, panels: usize) -> f64 {
    let peak = log_beta_peak(a, b);
    simpson(|s| substituted_density(b, a, s, peak), 0.0, (1.0 - z).sqrt(), panels)
}

/// Regularized incomplete beta by direct quadrature of the density.
pub fn beta_cdf_quadrature(z: f64, a: f64, b: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if z >= 1.0 {
        return 1.0;
    }
    const PANELS: usize = 20_000;
    let below = beta_mass_below(a, b, z, PANELS);
    let above = beta_mass_above(a, b, z, PANELS);
    below / (below + above)
}

/// F-distribution CDF by quadrature.
pub fn f_cdf_quadrature(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    beta_cdf_quadrature(d1 * x / (d1 * x + d2), d1 / 2.0, d2 / 2.0)
}

/// F quantile by bisection on the quadrature CDF.
pub fn f_quantile_quadrature(p: f64, d1: f64, d2: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    while f_cdf_quadrature(hi, d1, d2) < p {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if f_cdf_quadrature(mid, d1, d2) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Minimizer of `sum_i |y_i - phi_i t|^2 + (t - t0)' psi0^{-1} (t - t0)`.
pub fn batch_least_squares(
    phis: &[DMatrix<f64>],
    ys: &[DVector<f64>],
    theta0: &DVector<f64>,
    psi0: &DMatrix<f64>,
) -> DVector<f64> {
    let info0 = psi0.clone().try_inverse().expect("psi0 invertible");
    let mut normal = info0.clone();
    let mut rhs = &info0 * theta0;
    for (phi, y) in phis.iter().zip(ys) {
        normal += phi.transpose() * phi;
        rhs += phi.transpose() * y;
    }
    normal.lu().solve(&rhs).expect("normal equations solvable")
}

/// ARX recursion `y_k = -sum F_i y_{k-i} + sum G_i u_{k-i}` from zero
/// initial history, evaluated term by term.
pub fn arx_simulate(f: &[DMatrix<f64>], g: &[DMatrix<f64>], inputs: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let p = f[0].nrows();
    let mut ys: Vec<DVector<f64>> = Vec::with_capacity(inputs.len());
    for k in 0..inputs.len() {
        let mut y = DVector::zeros(p);
        for i in 1..=f.len() {
            if k >= i {
                y -= &f[i - 1] * &ys[k - i];
                y += &g[i - 1] * &inputs[k - i];
            }
        }
        ys.push(y);
    }
    ys
}

/// Splits a coefficient vector laid out as `[vec F_1..F_n, vec G_1..G_n]`.
pub fn split_theta(theta: &DVector<f64>, n: usize, m: usize, p: usize) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let s = theta.as_slice();
    let f = (0..n)
        .map(|i| DMatrix::from_column_slice(p, p, &s[i * p * p..(i + 1) * p * p]))
        .collect();
    let off = n * p * p;
    let g = (0..n)
        .map(|i| DMatrix::from_column_slice(p, m, &s[off + i * p * m..off + (i + 1) * p * m]))
        .collect();
    (f, g)
}

/// Random coefficients whose ARX model is stable, found by shrinking a draw
/// until the companion realization has spectral radius below `radius`.
pub fn stable_theta(rng: &mut ChaCha8Rng, n: usize, m: usize, p: usize, radius: f64) -> DVector<f64> {
    let len = n * p * (m + p);
    let mut theta = DVector::from_fn(len, |_, _| rng.random_range(-1.0..1.0));
    loop {
        let (f, _) = split_theta(&theta, n, m, p);
        let mut a = DMatrix::zeros(n * p, n * p);
        for (i, fi) in f.iter().enumerate() {
            a.view_mut((i * p, 0), (p, p)).copy_from(&(-fi));
            if i + 1 < n {
                a.view_mut((i * p, (i + 1) * p), (p, p)).fill_with_identity();
            }
        }
        let rho = a
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if rho < radius {
            return theta;
        }
        for v in theta.rows_mut(0, n * p * p).iter_mut() {
            *v *= 0.8;
        }
    }
}

/// `exp(M)` by scaling and squaring of a truncated Taylor series.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let norm = m.iter().map(|v| v.abs()).sum::<f64>();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = m / 2f64.powi(squarings);
    let n = m.nrows();
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..30 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Exact zero-order-hold discretization `(Ad, Bd)` of `(A, B)` over `ts`.
pub fn zoh_discretize(a: &DMatrix<f64>, b: &DMatrix<f64>, ts: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m) = (a.nrows(), b.ncols());
    let mut block = DMatrix::zeros(n + m, n + m);
    block.view_mut((0, 0), (n, n)).copy_from(&(a * ts));
    block.view_mut((0, n), (n, m)).copy_from(&(b * ts));
    let e = expm(&block);
    (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned())
}

/// Global QP minimum by enumerating every face of the feasible set with at
/// most `dim` active bounds, solving each equality-constrained problem and
/// keeping the best feasible point. Only practical for tiny problems.
pub fn qp_by_face_enumeration(qp: &QpProblem) -> DVector<f64> {
    let n = qp.dim();
    let c = qp.constraints.len();
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut choice = vec![0u8; c];
    loop {
        let active: Vec<(usize, BoundSide)> = choice
            .iter()
            .enumerate()
            .filter_map(|(i, &s)| match s {
                1 => Some((i, BoundSide::Lower)),
                2 => Some((i, BoundSide::Upper)),
                _ => None,
            })
            .collect();
        if active.len() <= n {
            if let Some(u) = equality_qp(qp, &active) {
                if qp.max_violation(&u) <= 1e-9 {
                    let obj = qp.objective(&u);
                    if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                        best = Some((obj, u));
                    }
                }
            }
        }
        let mut i = 0;
        while i < c {
            choice[i] += 1;
            if choice[i] < 3 {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
        if i == c {
            break;
        }
    }
    best.expect("feasible set is nonempty").1
}

fn equality_qp(qp: &QpProblem, active: &[(usize, BoundSide)]) -> Option<DVector<f64>> {
    let n = qp.dim();
    let k = active.len();
    let mut kkt = DMatrix::zeros(n + k, n + k);
    let mut rhs = DVector::zeros(n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(&qp.hessian);
    rhs.rows_mut(0, n).copy_from(&(-&qp.linear));
    for (r, &(i, side)) in active.iter().enumerate() {
        let row = &qp.constraints[i];
        for &(j, coef) in &row.terms {
            kkt[(n + r, j)] = coef;
            kkt[(j, n + r)] = coef;
        }
        rhs[n + r] = row.bound(side);
    }
    let sol = kkt.lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(sol.rows(0, n).into_owned())
}

/// Minimum of `qp` over its feasible set for two decision variables by a
/// grid search that shrinks around the best feasible point.
pub fn qp_grid_2d(qp: &QpProblem, lo: [f64; 2], hi: [f64; 2]) -> DVector<f64> {
    let (mut lo, mut hi) = (lo, hi);
    let mut best = DVector::from_column_slice(&[0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])]);
    let mut best_obj = f64::INFINITY;
    const POINTS: usize = 201;
    for _ in 0..12 {
        for i in 0..POINTS {
            for j in 0..POINTS {
                let u = DVector::from_column_slice(&[
                    lo[0] + (hi[0] - lo[0]) * i as f64 / (POINTS - 1) as f64,
                    lo[1] + (hi[1] - lo[1]) * j as f64 / (POINTS - 1) as f64,
                ]);
                if qp.max_violation(&u) > 0.0 {
                    continue;
                }
                let obj = qp.objective(&u);
                if obj < best_obj {
                    best_obj = obj;
                    best = u;
                }
            }
        }
        for d in 0..2 {
            let w = (hi[d] - lo[d]) / 10.0;
            lo[d] = best[d] - w;
            hi[d] = best[d] + w;
        }
    }
    best
}
