//! Primal active-set method for strictly convex dense QPs with two-sided
//! sparse linear constraints.
//!
//! The objective is handled in square-root form `1/2 |L'x + w|^2 + c`. Every
//! iterate stays feasible. Each iteration solves the equality-constrained
//! subproblem on the working set by the null-space method: with
//! `A_W' = [Y N] [R_a; 0]`, the point `x = Y R_a^{-T} b_W + N z` minimizes
//! `|L'N z + (L'x_p + w)|` over `z` via Householder QR with rows sorted by
//! norm, which stays accurate when the Hessian is extremely ill conditioned.
//! One refinement pass follows. Constraints enter when they block a step and
//! leave when their multiplier has the wrong sign; ties go to the smallest
//! constraint index.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mpc::problem::{BoundSide, LeastSquaresForm, QpProblem};

/// Default acceptance tolerance on every KKT residual.
pub const KKT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActiveConstraint {
    pub index: usize,
    pub side: BoundSide,
}

/// KKT residual norms of an accepted point.
///
/// Stationarity and dual feasibility are scaled by `1 + max(|g|_inf, |H x|_inf)`
/// so the certificate is invariant to the overall size of the cost; primal
/// feasibility is the absolute worst bound violation in control units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub feasibility: f64,
    pub complementarity: f64,
    pub dual_feasibility: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.feasibility)
            .max(self.complementarity)
            .max(self.dual_feasibility)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u: DVector<f64>,
    pub active: Vec<ActiveConstraint>,
    /// Signed multipliers, one per constraint; negative on active lower bounds,
    /// positive on active upper bounds, zero otherwise.
    pub multipliers: DVector<f64>,
    pub iterations: usize,
    pub residuals: KktResiduals,
    pub objective: f64,
    inputs: usize,
}

impl QpSolution {
    /// `u_{k|1}`, the only part of the sequence that is used.
    pub fn first_control(&self) -> DVector<f64> {
        self.u.rows(0, self.inputs).into_owned()
    }
}

/// Active-set solver with warm start from the previous shifted optimum.
#[derive(Debug, Clone)]
pub struct ActiveSetSolver {
    pub tolerance: f64,
    pub max_iterations: Option<usize>,
    previous: Option<DVector<f64>>,
}

impl Default for ActiveSetSolver {
    fn default() -> Self {
        Self {
            tolerance: KKT_TOLERANCE,
            max_iterations: None,
            previous: None,
        }
    }
}

impl ActiveSetSolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Forgets the stored warm-start sequence.
    pub fn reset(&mut self) {
        self.previous = None;
    }

    pub fn solve(&mut self, qp: &QpProblem) -> Result<QpSolution> {
        let start = self
            .shifted_previous(qp)
            .unwrap_or_else(|| qp.zero_move());
        let sol = solve_from(qp, start, self.tolerance, self.max_iterations)?;
        self.previous = Some(sol.u.clone());
        Ok(sol)
    }

    fn shifted_previous(&self, qp: &QpProblem) -> Option<DVector<f64>> {
        let prev = self.previous.as_ref()?;
        let (n, m) = (qp.dim(), qp.inputs());
        if prev.len() != n {
            return None;
        }
        let shifted = DVector::from_fn(n, |i, _| {
            let src = (i + m).min(n - m + i % m);
            prev[src]
        });
        (qp.max_violation(&shifted) == 0.0).then_some(shifted)
    }
}

/// Solves `qp` from the zero-move sequence.
pub fn solve_qp(qp: &QpProblem) -> Result<QpSolution> {
    solve_from(qp, qp.zero_move(), KKT_TOLERANCE, None)
}

struct Workspace<'a> {
    qp: &'a QpProblem,
    root: LeastSquaresForm,
}

impl Workspace<'_> {
    /// `H x + g = L (L'x + w)`.
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let l = &self.root.factor;
        l * (l.tr_mul(x) + &self.root.offset)
    }

    fn working_matrix(&self, working: &[ActiveConstraint]) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.qp.dim(), working.len());
        for (j, w) in working.iter().enumerate() {
            for &(i, c) in &self.qp.constraints[w.index].terms {
                a[(i, j)] += c;
            }
        }
        a
    }

    fn working_rhs(&self, working: &[ActiveConstraint]) -> DVector<f64> {
        DVector::from_iterator(
            working.len(),
            working
                .iter()
                .map(|w| self.qp.constraints[w.index].bound(w.side)),
        )
    }

    /// Minimizer on the working set and its multipliers.
    fn equality_qp(&self, working: &[ActiveConstraint]) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = self.qp.dim();
        let k = working.len();
        let l = &self.root.factor;
        let w = &self.root.offset;
        if k == 0 {
            let x = -l
                .tr_solve_lower_triangular(w)
                .ok_or(Error::NotPositiveDefinite("QP Hessian factor"))?;
            return Ok((x, DVector::zeros(0)));
        }
        if k > n {
            return Err(Error::QpCertificate("working set is linearly dependent".into()));
        }

        // Full orthogonal basis from QR of [A_W' | I].
        let a = self.working_matrix(working);
        let mut aug = DMatrix::zeros(n, k + n);
        aug.view_mut((0, 0), (n, k)).copy_from(&a);
        aug.view_mut((0, k), (n, n)).fill_with_identity();
        let qr = aug.qr();
        let q = qr.q();
        let r_full = qr.r();
        let r_a = r_full.view((0, 0), (k, k)).into_owned();
        if (0..k).any(|i| r_a[(i, i)].abs() <= 1e-12 * a.column(i).norm()) {
            return Err(Error::QpCertificate("working set is linearly dependent".into()));
        }
        let y = q.columns(0, k).into_owned();
        let null = q.columns(k, n - k).into_owned();
        let b = self.working_rhs(working);

        // x_p solves A_W x = b with x_p in range(A_W').
        let particular = |rhs: &DVector<f64>| -> DVector<f64> {
            let v = r_a
                .tr_solve_upper_triangular(rhs)
                .expect("triangular factor has a nonzero diagonal");
            &y * v
        };
        let mut x = particular(&b);

        let reduced = if k < n {
            Some(ReducedLeastSquares::new(l.tr_mul(&null))?)
        } else {
            None
        };
        for _ in 0..2 {
            // Restore A_W x = b, then minimize over the null space.
            x += particular(&(&b - a.tr_mul(&x)));
            if let Some(red) = &reduced {
                let z = red.solve(&(l.tr_mul(&x) + w));
                x += &null * z;
            }
        }

        let grad = self.gradient(&x);
        let mu = -r_a
            .solve_upper_triangular(&y.tr_mul(&grad))
            .expect("triangular factor has a nonzero diagonal");
        Ok((x, mu))
    }
}

/// `min_z |B z + c|` by Householder QR of `B` with rows sorted by norm.
struct ReducedLeastSquares {
    order: Vec<usize>,
    qr: nalgebra::QR<f64, nalgebra::Dyn, nalgebra::Dyn>,
    r: DMatrix<f64>,
}

impl ReducedLeastSquares {
    fn new(b: DMatrix<f64>) -> Result<Self> {
        let mut order: Vec<usize> = (0..b.nrows()).collect();
        let norms: Vec<f64> = b.row_iter().map(|r| r.norm()).collect();
        order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
        let sorted = DMatrix::from_fn(b.nrows(), b.ncols(), |i, j| b[(order[i], j)]);
        let qr = sorted.qr();
        let r = qr.r();
        let scale = r.diagonal().amax();
        if (0..r.nrows()).any(|i| r[(i, i)].is_nan() || r[(i, i)].abs() <= 1e-300 * scale.max(1.0)) {
            return Err(Error::NotPositiveDefinite("reduced QP Hessian"));
        }
        Ok(Self { order, qr, r })
    }

    fn solve(&self, c: &DVector<f64>) -> DVector<f64> {
        let mut t = DVector::from_fn(c.len(), |i, _| c[self.order[i]]);
        self.qr.q_tr_mul(&mut t);
        let k = self.r.nrows();
        -self
            .r
            .solve_upper_triangular(&t.rows(0, k).into_owned())
            .expect("reduced factor has a nonzero diagonal")
    }
}

fn solve_from(
    qp: &QpProblem,
    start: DVector<f64>,
    tolerance: f64,
    max_iterations: Option<usize>,
) -> Result<QpSolution> {
    let n = qp.dim();
    let ncons = qp.constraints.len();
    let ws = Workspace {
        qp,
        root: qp.least_squares()?,
    };
    let cap = max_iterations.unwrap_or(20 * (n + ncons) + 100);
    let g_scale = 1.0 + (&ws.root.factor * &ws.root.offset).amax();

    let mut x = start;
    let mut working: Vec<ActiveConstraint> = Vec::new();
    let mut in_working = vec![false; ncons];

    for iter in 1..=cap {
        let (x_eq, mu) = ws.equality_qp(&working)?;
        let step = &x_eq - &x;
        let step_scale = 1.0 + x.amax();

        if step.amax() <= 1e-12 * step_scale {
            x = x_eq;
            // Multiplier signs: lower bounds need mu <= 0, upper bounds mu >= 0.
            let hx = &ws.root.factor * ws.root.factor.tr_mul(&x);
            let dual_tol = 1e-12 * (g_scale + hx.amax());
            let mut leave: Option<(usize, f64)> = None;
            for (j, w) in working.iter().enumerate() {
                let wrong = match w.side {
                    BoundSide::Lower => mu[j],
                    BoundSide::Upper => -mu[j],
                };
                if wrong > dual_tol && leave.is_none_or(|(_, best)| wrong > best) {
                    leave = Some((j, wrong));
                }
            }
            match leave {
                None => {
                    return certify(&ws, x, &working, &mu, iter, tolerance);
                }
                Some((j, _)) => {
                    in_working[working[j].index] = false;
                    working.remove(j);
                }
            }
            continue;
        }

        let mut alpha = 1.0;
        let mut blocking: Option<ActiveConstraint> = None;
        for (c, con) in qp.constraints.iter().enumerate() {
            if in_working[c] {
                continue;
            }
            let s = con.dot(&step);
            let row_norm: f64 = con.terms.iter().map(|&(_, v)| v.abs()).sum();
            if s.abs() <= 1e-14 * row_norm * step.amax() {
                continue;
            }
            let value = con.eval(&x);
            let (side, limit) = if s > 0.0 {
                (BoundSide::Upper, con.upper)
            } else {
                (BoundSide::Lower, con.lower)
            };
            if !limit.is_finite() {
                continue;
            }
            let t = ((limit - value) / s).max(0.0);
            if t < alpha {
                alpha = t;
                blocking = Some(ActiveConstraint { index: c, side });
            }
        }
        x += step * alpha;
        if let Some(b) = blocking {
            // Land exactly on the bound for single-variable rows.
            let con = &qp.constraints[b.index];
            if let [(i, coef)] = con.terms.as_slice() {
                x[*i] = con.bound(b.side) / coef;
            }
            in_working[b.index] = true;
            working.push(b);
        }
    }

    let (x_eq, mu) = ws.equality_qp(&working)?;
    let res = residuals(&ws, &x_eq, &working, &mu);
    Err(Error::QpIterationLimit {
        iterations: cap,
        stationarity: res.stationarity,
        feasibility: res.feasibility,
    })
}

fn residuals(
    ws: &Workspace,
    x: &DVector<f64>,
    working: &[ActiveConstraint],
    mu: &DVector<f64>,
) -> KktResiduals {
    let qp = ws.qp;
    let l = &ws.root.factor;
    let hx = l * l.tr_mul(x);
    let g = l * &ws.root.offset;
    let mut grad = &hx + &g;
    let mut complementarity: f64 = 0.0;
    let mut dual: f64 = 0.0;
    for (j, w) in working.iter().enumerate() {
        let con = &qp.constraints[w.index];
        for &(i, c) in &con.terms {
            grad[i] += c * mu[j];
        }
        complementarity = complementarity.max((mu[j] * (con.eval(x) - con.bound(w.side))).abs());
        let wrong = match w.side {
            BoundSide::Lower => mu[j],
            BoundSide::Upper => -mu[j],
        };
        dual = dual.max(wrong);
    }
    let scale = 1.0 + g.amax().max(hx.amax());
    KktResiduals {
        stationarity: grad.amax() / scale,
        feasibility: qp.max_violation(x),
        complementarity: complementarity / scale,
        dual_feasibility: dual.max(0.0) / scale,
    }
}

fn certify(
    ws: &Workspace,
    x: DVector<f64>,
    working: &[ActiveConstraint],
    mu: &DVector<f64>,
    iterations: usize,
    tolerance: f64,
) -> Result<QpSolution> {
    let qp = ws.qp;
    let res = residuals(ws, &x, working, mu);
    if res.max() > tolerance || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::QpCertificate(format!(
            "residuals {res:?} exceed tolerance {tolerance:e} after {iterations} iterations"
        )));
    }
    let mut multipliers = DVector::zeros(qp.constraints.len());
    for (j, w) in working.iter().enumerate() {
        multipliers[w.index] = mu[j];
    }
    let mut active = working.to_vec();
    active.sort_by_key(|a| a.index);
    Ok(QpSolution {
        objective: qp.objective(&x),
        u: x,
        active,
        multipliers,
        iterations,
        residuals: res,
        inputs: qp.inputs(),
    })
}
