//! Online MIMO ARX identification by recursive least squares with
//! variable-rate forgetting.
//!
//! The model is
//!
//! ```text
//! y_k = -sum_{i=1..n} F_i y_{k-i} + sum_{i=1..n} G_i u_{k-i}
//! ```
//!
//! with `F_i` p x p and `G_i` p x m. The coefficient vector stacks
//! `vec[F_1 .. F_n]` followed by `vec[G_1 .. G_n]` (column-major), so that
//! the prediction is `phi_k * theta` with
//! `phi_k = [-y_{k-1}' .. -y_{k-n}'  u_{k-1}' .. u_{k-n}'] (x) I_p`.
//!
//! # Forgetting statistic
//!
//! Forgetting is driven by an F-test on identification errors. With the
//! trailing window `e_{j-tau_d} .. e_j`, let `s_n` be the mean squared error
//! norm over the newest `tau_n` errors and `s_d` the mean over the
//! `tau_d - tau_n` errors immediately before them. Then
//!
//! ```text
//! F_hat = s_n / s_d
//! g     = max(0, sqrt(F_hat / F_inv(1 - alpha_F; p*tau_n, p*(tau_d - tau_n))) - 1)
//! beta  = 1 + eta * g        (beta = 1 while j < tau_d)
//! ```
//!
//! so forgetting only activates once the recent error variance is
//! significantly larger than the older one at level `alpha_F`. Both window
//! means are floored at [`ERROR_VARIANCE_FLOOR`] so an exactly-zero reference
//! window does not produce an infinite ratio.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::fstats::{f_quantile, FQuantileQuery};

/// Lower bound applied to window mean-square errors in the forgetting statistic.
pub const ERROR_VARIANCE_FLOOR: f64 = 1e-30;

/// Sizes of an ARX model: order `n`, `m` inputs, `p` outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArxDims {
    pub order: usize,
    pub inputs: usize,
    pub outputs: usize,
}

impl ArxDims {
    pub fn new(order: usize, inputs: usize, outputs: usize) -> Result<Self> {
        if order == 0 || inputs == 0 || outputs == 0 {
            return Err(Error::InvalidConfig(format!(
                "model order, inputs and outputs must be positive (got n={order}, m={inputs}, p={outputs})"
            )));
        }
        Ok(Self {
            order,
            inputs,
            outputs,
        })
    }

    /// Length of the coefficient vector, `n p (m + p)`.
    pub fn theta_len(&self) -> usize {
        self.order * self.outputs * (self.inputs + self.outputs)
    }

    /// Length of `theta_F`, `n p^2`.
    pub fn theta_f_len(&self) -> usize {
        self.order * self.outputs * self.outputs
    }

    /// Model state dimension `n p`.
    pub fn state_dim(&self) -> usize {
        self.order * self.outputs
    }
}

/// Past outputs and inputs, newest first, zero before the first sample.
#[derive(Debug, Clone, PartialEq)]
pub struct IoHistory {
    dims: ArxDims,
    outputs: VecDeque<DVector<f64>>,
    inputs: VecDeque<DVector<f64>>,
}

impl IoHistory {
    pub fn new(dims: ArxDims) -> Self {
        Self {
            dims,
            outputs: (0..dims.order)
                .map(|_| DVector::zeros(dims.outputs))
                .collect(),
            inputs: (0..dims.order)
                .map(|_| DVector::zeros(dims.inputs))
                .collect(),
        }
    }

    pub fn dims(&self) -> ArxDims {
        self.dims
    }

    /// `y_{k-lag}` for `lag` in `1..=n`.
    pub fn output(&self, lag: usize) -> &DVector<f64> {
        &self.outputs[lag - 1]
    }

    /// `u_{k-lag}` for `lag` in `1..=n`.
    pub fn input(&self, lag: usize) -> &DVector<f64> {
        &self.inputs[lag - 1]
    }

    /// Shifts in the sample pair `(y_k, u_k)`; the oldest pair drops out.
    pub fn push(&mut self, y: DVector<f64>, u: DVector<f64>) -> Result<()> {
        check_len("history output", self.dims.outputs, y.len())?;
        check_len("history input", self.dims.inputs, u.len())?;
        self.outputs.pop_back();
        self.inputs.pop_back();
        self.outputs.push_front(y);
        self.inputs.push_front(u);
        Ok(())
    }
}

/// RLS state: coefficient vector and covariance-like matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientEstimate {
    dims: ArxDims,
    pub theta: DVector<f64>,
    /// `psi`, kept in sync with `psi_root`.
    psi: DMatrix<f64>,
    /// Lower-triangular `S` with `psi = S S'`. Updating the factor instead of
    /// `psi` keeps the covariance positive definite when forgetting inflates
    /// it across many decades.
    psi_root: DMatrix<f64>,
}

impl CoefficientEstimate {
    pub fn new(dims: ArxDims, theta: DVector<f64>, psi: DMatrix<f64>) -> Result<Self> {
        let n = dims.theta_len();
        check_len("theta", n, theta.len())?;
        check_len("psi rows", n, psi.nrows())?;
        check_len("psi cols", n, psi.ncols())?;
        let psi_root = psi
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite("initial psi"))?
            .unpack();
        Ok(Self {
            dims,
            theta,
            psi,
            psi_root,
        })
    }

    /// `theta_0 = theta_scale * 1`, `psi_0 = psi_scale * I`.
    pub fn cold_start(dims: ArxDims, theta_scale: f64, psi_scale: f64) -> Result<Self> {
        if !(psi_scale > 0.0 && psi_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "psi_0 scale must be positive, got {psi_scale}"
            )));
        }
        let n = dims.theta_len();
        Self::new(
            dims,
            DVector::from_element(n, theta_scale),
            DMatrix::identity(n, n) * psi_scale,
        )
    }

    pub fn dims(&self) -> ArxDims {
        self.dims
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    /// Lower-triangular square root `S` of `psi = S S'`.
    pub fn psi_root(&self) -> &DMatrix<f64> {
        &self.psi_root
    }

    /// Coefficient matrix `F_i`, `i` in `1..=n`.
    pub fn f_block(&self, i: usize) -> DMatrix<f64> {
        f_block(&self.theta, self.dims, i)
    }

    /// Coefficient matrix `G_i`, `i` in `1..=n`.
    pub fn g_block(&self, i: usize) -> DMatrix<f64> {
        g_block(&self.theta, self.dims, i)
    }
}

/// `F_i` read out of a coefficient vector laid out as `[vec F; vec G]`.
pub fn f_block(theta: &DVector<f64>, dims: ArxDims, i: usize) -> DMatrix<f64> {
    let p = dims.outputs;
    let start = (i - 1) * p * p;
    DMatrix::from_column_slice(p, p, &theta.as_slice()[start..start + p * p])
}

/// `G_i` read out of a coefficient vector laid out as `[vec F; vec G]`.
pub fn g_block(theta: &DVector<f64>, dims: ArxDims, i: usize) -> DMatrix<f64> {
    let (p, m) = (dims.outputs, dims.inputs);
    let start = dims.theta_f_len() + (i - 1) * p * m;
    DMatrix::from_column_slice(p, m, &theta.as_slice()[start..start + p * m])
}

/// Builds `phi_k` (p x n p (m + p)) from the history.
pub fn build_regressor(h: &IoHistory) -> DMatrix<f64> {
    let dims = h.dims();
    let p = dims.outputs;
    let mut phi = DMatrix::zeros(p, dims.theta_len());
    let mut col = 0;
    let mut place = |value: f64, phi: &mut DMatrix<f64>| {
        if value != 0.0 {
            for r in 0..p {
                phi[(r, col * p + r)] = value;
            }
        }
        col += 1;
    };
    for lag in 1..=dims.order {
        for &v in h.output(lag).iter() {
            place(-v, &mut phi);
        }
    }
    for lag in 1..=dims.order {
        for &v in h.input(lag).iter() {
            place(v, &mut phi);
        }
    }
    phi
}

/// One-step output prediction `phi * theta`.
pub fn predict_output(phi: &DMatrix<f64>, est: &CoefficientEstimate) -> Result<DVector<f64>> {
    check_len("regressor columns", est.theta.len(), phi.ncols())?;
    Ok(phi * &est.theta)
}

/// Identification error `y - phi * theta`.
pub fn identification_error(
    phi: &DMatrix<f64>,
    est: &CoefficientEstimate,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_len("measured output", phi.nrows(), y.len())?;
    Ok(y - predict_output(phi, est)?)
}

/// One RLS step with forgetting input `beta >= 1`.
pub fn rls_update(
    est: &CoefficientEstimate,
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: f64,
) -> Result<CoefficientEstimate> {
    let n = est.theta.len();
    check_len("regressor columns", n, phi.ncols())?;
    check_len("measured output", phi.nrows(), y.len())?;
    if !(beta >= 1.0 && beta.is_finite()) {
        return Err(Error::Domain(format!("forgetting input beta = {beta} must be >= 1")));
    }
    let p = phi.nrows();
    // Array form of the recursion: with psi = S S', the pre-array
    //   [ I / sqrt(beta)  phi S ]
    //   [ 0               S     ]
    // is rotated to lower-triangular form [L11 0; L21 L22], and then
    // L22 L22' = psi - psi phi' (I / beta + phi psi phi')^{-1} phi psi.
    let mut pre_t = DMatrix::zeros(p + n, p + n);
    for i in 0..p {
        pre_t[(i, i)] = 1.0 / beta.sqrt();
    }
    pre_t
        .view_mut((p, 0), (n, p))
        .copy_from(&(phi * &est.psi_root).transpose());
    pre_t
        .view_mut((p, p), (n, n))
        .copy_from(&est.psi_root.transpose());
    let post = pre_t.qr().r();
    if (0..p).any(|i| post[(i, i)] == 0.0) {
        return Err(Error::SingularInnovation);
    }
    let mut psi_root = post.view((p, p), (n, n)).transpose() * beta.sqrt();
    for j in 0..n {
        if psi_root[(j, j)] < 0.0 {
            psi_root.column_mut(j).neg_mut();
        }
    }
    let mut psi = &psi_root * psi_root.transpose();
    symmetrize(&mut psi);
    let err = y - phi * &est.theta;
    let theta = &est.theta + &psi_root * (psi_root.transpose() * (phi.transpose() * err));
    if theta.iter().any(|v| !v.is_finite()) || psi_root.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("RLS update"));
    }
    Ok(CoefficientEstimate {
        dims: est.dims,
        theta,
        psi,
        psi_root,
    })
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Variable-rate forgetting parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForgettingConfig {
    pub enabled: bool,
    pub eta: f64,
    pub tau_n: usize,
    pub tau_d: usize,
    pub alpha_f: f64,
    /// RMS identification-error resolution. Window mean squares are floored
    /// at `error_floor^2`, so errors below it count as zero and cannot
    /// trigger forgetting. Zero leaves only a tiny guard against `0 / 0`.
    pub error_floor: f64,
}

impl ForgettingConfig {
    pub fn new(eta: f64, tau_n: usize, tau_d: usize, alpha_f: f64) -> Self {
        Self {
            enabled: true,
            eta,
            tau_n,
            tau_d,
            alpha_f,
            error_floor: 0.0,
        }
    }

    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::new(1.0, 1, 2, 0.05)
        }
    }

    /// Floor applied to each window's mean squared error norm.
    pub fn variance_floor(&self) -> f64 {
        (self.error_floor * self.error_floor).max(ERROR_VARIANCE_FLOOR)
    }

    /// Checks the window and gain constraints for a model with `p` outputs.
    pub fn validate(&self, p: usize) -> Result<()> {
        if !self.enabled {
            return Ok(());
        }
        let mut issues = Vec::new();
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            issues.push(format!("eta = {} must be positive", self.eta));
        }
        if self.tau_d <= p {
            issues.push(format!("tau_d = {} must exceed p = {p}", self.tau_d));
        }
        if self.tau_n < p || self.tau_n >= self.tau_d {
            issues.push(format!(
                "tau_n = {} must lie in [p, tau_d) = [{p}, {})",
                self.tau_n, self.tau_d
            ));
        }
        if !(self.error_floor >= 0.0 && self.error_floor.is_finite()) {
            issues.push(format!("error floor = {} must be nonnegative", self.error_floor));
        }
        // alpha_F = 1 would put the test threshold at F_inv(0) = 0.
        if !(self.alpha_f > 0.0 && self.alpha_f < 1.0) {
            issues.push(format!("alpha_F = {} must lie in (0, 1)", self.alpha_f));
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(issues.join("; ")))
        }
    }
}

/// Trailing identification errors used by the forgetting test.
#[derive(Debug, Clone, PartialEq)]
pub struct ForgettingState {
    errors: VecDeque<DVector<f64>>,
    capacity: usize,
    outputs: usize,
    threshold: f64,
    steps: usize,
}

impl ForgettingState {
    pub fn new(cfg: &ForgettingConfig, outputs: usize) -> Result<Self> {
        cfg.validate(outputs)?;
        let threshold = if cfg.enabled {
            let p = outputs as f64;
            f_quantile(FQuantileQuery::new(
                1.0 - cfg.alpha_f,
                p * cfg.tau_n as f64,
                p * (cfg.tau_d - cfg.tau_n) as f64,
            )?)?
        } else {
            f64::INFINITY
        };
        Ok(Self {
            errors: VecDeque::with_capacity(cfg.tau_d + 1),
            capacity: cfg.tau_d + 1,
            outputs,
            threshold,
            steps: 0,
        })
    }

    /// Appends `e_k(theta_k)`; keeps at most `tau_d + 1` errors.
    pub fn record(&mut self, error: DVector<f64>) -> Result<()> {
        check_len("identification error", self.outputs, error.len())?;
        if self.errors.len() == self.capacity {
            self.errors.pop_front();
        }
        self.errors.push_back(error);
        self.steps += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.errors.is_empty()
    }

    /// Number of errors recorded so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// F-test critical value `F_inv(1 - alpha_F; p tau_n, p (tau_d - tau_n))`.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// The variance ratio `F_hat`, or `None` until the window is full.
    pub fn variance_ratio(&self, cfg: &ForgettingConfig) -> Option<f64> {
        let window = cfg.tau_d;
        if self.errors.len() < window {
            return None;
        }
        let newest = self.errors.len() - cfg.tau_n;
        let oldest = self.errors.len() - window;
        let mean_sq = |range: std::ops::Range<usize>| {
            let count = range.len() as f64;
            let sum: f64 = range.map(|j| self.errors[j].norm_squared()).sum();
            (sum / count).max(cfg.variance_floor())
        };
        Some(mean_sq(newest..self.errors.len()) / mean_sq(oldest..newest))
    }

    /// The rectified statistic `g * 1(g)`.
    pub fn statistic(&self, cfg: &ForgettingConfig) -> f64 {
        match self.variance_ratio(cfg) {
            Some(ratio) => ((ratio / self.threshold).sqrt() - 1.0).max(0.0),
            None => 0.0,
        }
    }
}

/// Forgetting input `beta_k = 1 / lambda_k` for step `k`.
pub fn forgetting_factor(state: &ForgettingState, cfg: &ForgettingConfig, k: usize) -> Result<f64> {
    if !cfg.enabled {
        return Ok(1.0);
    }
    cfg.validate(state.outputs)?;
    if k < cfg.tau_d {
        return Ok(1.0);
    }
    let beta = 1.0 + cfg.eta * state.statistic(cfg);
    if !beta.is_finite() {
        return Err(Error::NonFinite("forgetting factor"));
    }
    Ok(beta)
}
