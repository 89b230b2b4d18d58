use nalgebra::{DMatrix, DVector};

use crate::actuation::SaturationLimits;
use crate::error::{check_len, Error, Result};
use crate::mpc::prediction::PredictionMatrices;
use crate::rls::symmetrize;

/// Output, terminal and move-size weights plus the command-output selector.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcWeights {
    q_bar: DMatrix<f64>,
    p_bar: DMatrix<f64>,
    r: DMatrix<f64>,
    c_t: DMatrix<f64>,
    horizon: usize,
}

impl MpcWeights {
    pub fn new(
        q_bar: DMatrix<f64>,
        p_bar: DMatrix<f64>,
        r: DMatrix<f64>,
        c_t: DMatrix<f64>,
        horizon: usize,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        let pt = c_t.nrows();
        if pt == 0 || c_t.ncols() == 0 {
            return Err(Error::InvalidConfig("command selector must be non-empty".into()));
        }
        let m = r.nrows() / horizon;
        check_len("cost-to-go weight", (horizon - 1) * pt, q_bar.nrows())?;
        check_len("cost-to-go weight cols", q_bar.nrows(), q_bar.ncols())?;
        check_len("terminal weight", pt, p_bar.nrows())?;
        check_len("terminal weight cols", pt, p_bar.ncols())?;
        check_len("move-size weight", horizon * m, r.nrows())?;
        check_len("move-size weight cols", r.nrows(), r.ncols())?;
        if m == 0 {
            return Err(Error::InvalidConfig("move-size weight is empty".into()));
        }
        for (name, w) in [("cost-to-go weight", &q_bar), ("terminal weight", &p_bar), ("move-size weight", &r)] {
            if w.nrows() > 0 && !is_symmetric_pd(w) {
                return Err(Error::InvalidConfig(format!("{name} is not symmetric positive definite")));
            }
        }
        Ok(Self {
            q_bar,
            p_bar,
            r,
            c_t,
            horizon,
        })
    }

    /// Diagonal weights replicated over the horizon: `Q_bar = I (x) diag(q)`,
    /// `P_bar = diag(p)`, `R = I (x) diag(r)`.
    pub fn diagonal(
        horizon: usize,
        q: &[f64],
        p: &[f64],
        r: &[f64],
        c_t: DMatrix<f64>,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        let rep = |d: &[f64], times: usize| {
            DMatrix::from_diagonal(&DVector::from_iterator(
                d.len() * times,
                (0..times).flat_map(|_| d.iter().copied()),
            ))
        };
        Self::new(
            rep(q, horizon - 1),
            rep(p, 1),
            rep(r, horizon),
            c_t,
            horizon,
        )
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn command_selector(&self) -> &DMatrix<f64> {
        &self.c_t
    }

    pub fn move_weight(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// `Q = blockdiag(Q_bar, P_bar)`.
    pub fn output_weight(&self) -> DMatrix<f64> {
        let nq = self.q_bar.nrows();
        let pt = self.p_bar.nrows();
        let mut q = DMatrix::zeros(nq + pt, nq + pt);
        q.view_mut((0, 0), (nq, nq)).copy_from(&self.q_bar);
        q.view_mut((nq, nq), (pt, pt)).copy_from(&self.p_bar);
        q
    }
}

fn is_symmetric_pd(w: &DMatrix<f64>) -> bool {
    w.nrows() == w.ncols()
        && (w - w.transpose()).amax() <= 1e-12 * (1.0 + w.amax())
        && w.clone().cholesky().is_some()
}

/// Which side of a two-sided linear constraint is binding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundSide {
    Lower,
    Upper,
}

/// `lower <= sum(coef * U[idx]) <= upper` with a sparse row.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBound {
    pub terms: Vec<(usize, f64)>,
    pub lower: f64,
    pub upper: f64,
}

impl LinearBound {
    pub fn eval(&self, u: &DVector<f64>) -> f64 {
        self.terms.iter().map(|&(i, c)| c * u[i]).sum()
    }

    pub fn dot(&self, v: &DVector<f64>) -> f64 {
        self.eval(v)
    }

    pub fn bound(&self, side: BoundSide) -> f64 {
        match side {
            BoundSide::Lower => self.lower,
            BoundSide::Upper => self.upper,
        }
    }

    /// Amount by which `u` violates this constraint (0 when satisfied).
    pub fn violation(&self, u: &DVector<f64>) -> f64 {
        let v = self.eval(u);
        (self.lower - v).max(v - self.upper).max(0.0)
    }
}

/// `min 1/2 U'HU + g'U + c` subject to the stacked magnitude and move-size bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constant: f64,
    /// Magnitude bounds for every `u_{k|i}` first, then the move-size bounds.
    pub constraints: Vec<LinearBound>,
    /// Last implemented control, entering the first move.
    pub u_prev: DVector<f64>,
    /// Square-root form of the objective, when known from assembly.
    pub root: Option<LeastSquaresForm>,
    horizon: usize,
}

/// The objective written as `1/2 |L' U + w|^2 + c` with `L` lower triangular
/// and a positive diagonal, so that `H = L L'` and `g = L w`.
///
/// A poorly identified model can make `T` so large that forming `H`
/// explicitly swamps the move-size term below rounding. Factoring the
/// weighted residual stack directly keeps that information.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresForm {
    pub factor: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub residual: f64,
}

impl LeastSquaresForm {
    pub fn objective(&self, u: &DVector<f64>) -> f64 {
        0.5 * (self.factor.tr_mul(u) + &self.offset).norm_squared() + self.residual
    }
}

impl QpProblem {
    pub fn new(
        hessian: DMatrix<f64>,
        linear: DVector<f64>,
        constant: f64,
        constraints: Vec<LinearBound>,
        u_prev: DVector<f64>,
        horizon: usize,
    ) -> Result<Self> {
        let n = linear.len();
        check_len("hessian rows", n, hessian.nrows())?;
        check_len("hessian cols", n, hessian.ncols())?;
        if horizon == 0 || !n.is_multiple_of(horizon) {
            return Err(Error::InvalidConfig(format!(
                "decision vector of length {n} does not split into {horizon} steps"
            )));
        }
        check_len("previous control", n / horizon, u_prev.len())?;
        if constraints
            .iter()
            .any(|c| c.terms.iter().any(|&(i, _)| i >= n) || c.lower > c.upper)
        {
            return Err(Error::InvalidConfig("malformed constraint row".into()));
        }
        Ok(Self {
            hessian,
            linear,
            constant,
            constraints,
            u_prev,
            root: None,
            horizon,
        })
    }

    /// Attaches a square-root form consistent with `hessian` and `linear`.
    pub fn with_root(mut self, root: LeastSquaresForm) -> Result<Self> {
        let n = self.dim();
        let l = &root.factor;
        check_len("hessian factor rows", n, l.nrows())?;
        check_len("hessian factor cols", n, l.ncols())?;
        check_len("factor offset", n, root.offset.len())?;
        if (0..n).any(|i| !(l[(i, i)] > 0.0 && l[(i, i)].is_finite()))
            || (0..n).any(|i| (i + 1..n).any(|j| l[(i, j)] != 0.0))
        {
            return Err(Error::NotPositiveDefinite("QP Hessian factor"));
        }
        self.root = Some(root);
        Ok(self)
    }

    /// The attached square-root form, or one computed by Cholesky.
    pub fn least_squares(&self) -> Result<LeastSquaresForm> {
        if let Some(root) = &self.root {
            return Ok(root.clone());
        }
        let factor = self
            .hessian
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite("QP Hessian"))?
            .unpack();
        let offset = factor
            .solve_lower_triangular(&self.linear)
            .ok_or(Error::NotPositiveDefinite("QP Hessian"))?;
        let residual = self.constant - 0.5 * offset.norm_squared();
        Ok(LeastSquaresForm {
            factor,
            offset,
            residual,
        })
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn inputs(&self) -> usize {
        self.u_prev.len()
    }

    pub fn objective(&self, u: &DVector<f64>) -> f64 {
        match &self.root {
            Some(root) => root.objective(u),
            None => 0.5 * u.dot(&(&self.hessian * u)) + self.linear.dot(u) + self.constant,
        }
    }

    /// The hold-last-control sequence `1 (x) u_prev`.
    pub fn zero_move(&self) -> DVector<f64> {
        let m = self.inputs();
        DVector::from_fn(self.dim(), |i, _| self.u_prev[i % m])
    }

    pub fn max_violation(&self, u: &DVector<f64>) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.violation(u))
            .fold(0.0, f64::max)
    }
}

/// Expands the receding-horizon tracking cost into a quadratic program in `U`.
///
/// `commands` stacks `r_{k+1} .. r_{k+l}`; `u_prev` is the control currently
/// applied, so the first move is `u_{k|1} - u_prev`.
pub fn assemble_qp(
    pm: &PredictionMatrices,
    x1: &DVector<f64>,
    commands: &DVector<f64>,
    w: &MpcWeights,
    lim: &SaturationLimits,
    u_prev: &DVector<f64>,
) -> Result<QpProblem> {
    let l = pm.horizon();
    let (p, m) = (pm.outputs(), pm.inputs());
    let c_t = w.command_selector();
    let pt = c_t.nrows();
    check_len("weight horizon", l, w.horizon())?;
    check_len("command selector cols", p, c_t.ncols())?;
    check_len("command preview", l * pt, commands.len())?;
    check_len("predicted state", pm.gamma.ncols(), x1.len())?;
    check_len("move weight", l * m, w.move_weight().nrows())?;
    check_len("saturation channels", m, lim.channels())?;
    check_len("previous control", m, u_prev.len())?;

    let free = &pm.gamma * x1;
    let mut tracking = DMatrix::zeros(l * pt, l * m);
    let mut offset = DVector::zeros(l * pt);
    for i in 0..l {
        tracking
            .view_mut((i * pt, 0), (pt, l * m))
            .copy_from(&(c_t * pm.toeplitz.view((i * p, 0), (p, l * m))));
        offset
            .rows_mut(i * pt, pt)
            .copy_from(&(c_t * free.rows(i * p, p) - commands.rows(i * pt, pt)));
    }

    // Move map: DeltaU = D U - d, D lower block-bidiagonal, d = [u_prev; 0; ..].
    let mut diff = DMatrix::identity(l * m, l * m);
    for i in m..l * m {
        diff[(i, i - m)] = -1.0;
    }
    let mut d = DVector::zeros(l * m);
    d.rows_mut(0, m).copy_from(u_prev);

    let q = w.output_weight();
    let r = w.move_weight();
    let qm = &q * &tracking;
    let rd = r * &diff;
    let mut hessian = (tracking.transpose() * &qm + diff.transpose() * &rd) * 2.0;
    symmetrize(&mut hessian);
    let linear = (qm.transpose() * &offset - rd.transpose() * &d) * 2.0;
    let constant = offset.dot(&(&q * &offset)) + d.dot(&(r * &d));

    // Square-root stack S = [Lq' M; Lr' D] with target s, cost |S U - s|^2.
    let lq = q
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("output weight"))?
        .unpack();
    let lr = r
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("move-size weight"))?
        .unpack();
    let root = square_root_form(
        &lq.transpose() * &tracking,
        -(lq.transpose() * &offset),
        lr.transpose() * &diff,
        lr.transpose() * &d,
    );

    let mut constraints = Vec::with_capacity(2 * l * m);
    for i in 0..l {
        for j in 0..m {
            constraints.push(LinearBound {
                terms: vec![(i * m + j, 1.0)],
                lower: lim.u_min()[j],
                upper: lim.u_max()[j],
            });
        }
    }
    for i in 0..l {
        for j in 0..m {
            let idx = i * m + j;
            let (terms, shift) = if i == 0 {
                (vec![(idx, 1.0)], u_prev[j])
            } else {
                (vec![(idx - m, -1.0), (idx, 1.0)], 0.0)
            };
            constraints.push(LinearBound {
                terms,
                lower: lim.du_min()[j] + shift,
                upper: lim.du_max()[j] + shift,
            });
        }
    }

    if hessian.iter().chain(linear.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("QP assembly"));
    }
    QpProblem::new(hessian, linear, constant, constraints, u_prev.clone(), l)?.with_root(root)
}

/// Factors `|S1 U - s1|^2 + |S2 U - s2|^2` into `1/2 |L' U + w|^2 + c`.
///
/// Rows are ordered by decreasing norm before Householder QR, which keeps the
/// factorization accurate when some rows are many orders of magnitude larger
/// than others.
fn square_root_form(
    s1: DMatrix<f64>,
    t1: DVector<f64>,
    s2: DMatrix<f64>,
    t2: DVector<f64>,
) -> LeastSquaresForm {
    let n = s1.ncols();
    let rows = s1.nrows() + s2.nrows();
    let mut order: Vec<(usize, f64)> = (0..rows)
        .map(|i| {
            let norm = if i < s1.nrows() {
                s1.row(i).norm()
            } else {
                s2.row(i - s1.nrows()).norm()
            };
            (i, norm)
        })
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut stack = DMatrix::zeros(rows, n);
    let mut target = DVector::zeros(rows);
    for (dst, &(src, _)) in order.iter().enumerate() {
        if src < s1.nrows() {
            stack.set_row(dst, &s1.row(src));
            target[dst] = t1[src];
        } else {
            stack.set_row(dst, &s2.row(src - s1.nrows()));
            target[dst] = t2[src - s1.nrows()];
        }
    }
    let qr = stack.qr();
    let mut upper = qr.r();
    qr.q_tr_mul(&mut target);
    let head = target.rows(0, n).into_owned();
    let residual = target.rows(n, rows - n).norm_squared();
    let mut offset = -head;
    for i in 0..n {
        if upper[(i, i)] < 0.0 {
            upper.row_mut(i).neg_mut();
            offset[i] = -offset[i];
        }
    }
    // |S U - s|^2 = |R U - t|^2 + c = 1/2 |sqrt(2) R U - sqrt(2) t|^2 + c
    LeastSquaresForm {
        factor: upper.transpose() * std::f64::consts::SQRT_2,
        offset: offset * std::f64::consts::SQRT_2,
        residual,
    }
}

/// First `m` entries `u_{k|1}` of an optimized control sequence.
pub fn first_control(u: &DVector<f64>, inputs: usize) -> DVector<f64> {
    u.rows(0, inputs).into_owned()
}
