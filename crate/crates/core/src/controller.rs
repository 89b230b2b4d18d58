//! One adaptive control loop: identification, realization, state
//! reconstruction and receding-horizon optimization, in that order, every step.
//!
//! Timing follows the one-step-ahead convention of the move map: at step `k`
//! the control `u_k` held over the current sample interval is already fixed,
//! and the optimizer chooses `u_{k|1}`, which the loop runner saturates and
//! applies over the next interval.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::actuation::{saturate_magnitude, SaturationLimits};
use crate::bocf::{model_step, realize, reconstruct_state};
use crate::error::{check_len, Error, Result};
use crate::mpc::{
    assemble_qp, build_prediction, ActiveSetSolver, KktResiduals, MpcWeights,
};
use crate::rls::{
    build_regressor, forgetting_factor, identification_error, rls_update, ArxDims,
    CoefficientEstimate, ForgettingConfig, ForgettingState, IoHistory,
};

/// Seeded pseudo-random binary excitation added to the requested control.
#[derive(Debug, Clone, PartialEq)]
pub struct DitherConfig {
    /// Per-channel amplitude; each sample is `+amplitude` or `-amplitude`.
    pub amplitude: Vec<f64>,
    /// Number of initial steps during which the dither is active.
    pub steps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcacConfig {
    pub name: String,
    pub dims: ArxDims,
    pub horizon: usize,
    pub weights: MpcWeights,
    pub limits: SaturationLimits,
    pub theta0_scale: f64,
    pub psi0_scale: f64,
    /// Overrides `theta0_scale * 1` when set.
    pub initial_theta: Option<DVector<f64>>,
    pub forgetting: ForgettingConfig,
    pub dither: Option<DitherConfig>,
    /// Plant output indices feeding this loop, in loop order.
    pub output_map: Vec<usize>,
    /// Plant input indices driven by this loop, in loop order.
    pub input_map: Vec<usize>,
}

impl PcacConfig {
    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        let ArxDims {
            inputs: m,
            outputs: p,
            ..
        } = self.dims;
        if self.horizon != self.weights.horizon() {
            issues.push(format!(
                "weights built for horizon {} but loop horizon is {}",
                self.weights.horizon(),
                self.horizon
            ));
        }
        if self.weights.command_selector().ncols() != p {
            issues.push(format!(
                "command selector has {} columns, loop has {p} outputs",
                self.weights.command_selector().ncols()
            ));
        }
        if self.weights.move_weight().nrows() != self.horizon * m {
            issues.push("move-size weight does not match horizon x inputs".to_string());
        }
        if self.limits.channels() != m {
            issues.push(format!(
                "saturation limits have {} channels, loop has {m} inputs",
                self.limits.channels()
            ));
        }
        if self.output_map.len() != p {
            issues.push(format!("output map has {} entries, expected {p}", self.output_map.len()));
        }
        if self.input_map.len() != m {
            issues.push(format!("input map has {} entries, expected {m}", self.input_map.len()));
        }
        for (label, map) in [("output", &self.output_map), ("input", &self.input_map)] {
            let mut sorted = map.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != map.len() {
                issues.push(format!("{label} map is not injective"));
            }
        }
        if !(self.psi0_scale > 0.0 && self.psi0_scale.is_finite()) {
            issues.push(format!("psi_0 scale {} must be positive", self.psi0_scale));
        }
        if !self.theta0_scale.is_finite() {
            issues.push("theta_0 scale must be finite".to_string());
        }
        if let Some(theta) = &self.initial_theta {
            if theta.len() != self.dims.theta_len() {
                issues.push(format!(
                    "initial theta has length {}, expected {}",
                    theta.len(),
                    self.dims.theta_len()
                ));
            }
        }
        if let Some(d) = &self.dither {
            if d.amplitude.len() != m || d.amplitude.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
                issues.push(format!("dither needs {m} nonnegative amplitudes"));
            }
        }
        if let Err(e) = self.forgetting.validate(p) {
            issues.push(e.to_string());
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("loop `{}`: {}", self.name, issues.join("; "))))
        }
    }
}

/// Diagnostics from one controller step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub u_req: DVector<f64>,
    pub beta: f64,
    pub identification_error: DVector<f64>,
    pub qp_iterations: usize,
    pub qp_cost: f64,
    pub kkt: KktResiduals,
    pub zero_move_feasible: bool,
}

#[derive(Debug, Clone)]
pub struct PcacController {
    cfg: PcacConfig,
    estimate: CoefficientEstimate,
    history: IoHistory,
    forgetting: ForgettingState,
    /// Control held over the current sample interval.
    applied: DVector<f64>,
    /// Output measured at the current step, awaiting `commit`.
    pending_output: Option<DVector<f64>>,
    step: usize,
    solver: ActiveSetSolver,
    rng: Option<ChaCha8Rng>,
}

impl PcacController {
    pub fn new(cfg: PcacConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.dims.theta_len();
        let theta = cfg
            .initial_theta
            .clone()
            .unwrap_or_else(|| DVector::from_element(n, cfg.theta0_scale));
        let estimate =
            CoefficientEstimate::new(cfg.dims, theta, DMatrix::identity(n, n) * cfg.psi0_scale)?;
        let forgetting = ForgettingState::new(&cfg.forgetting, cfg.dims.outputs)?;
        // u_{-1} = 0, pulled into the magnitude box if zero is outside it.
        let applied = saturate_magnitude(&DVector::zeros(cfg.dims.inputs), &cfg.limits)?;
        let rng = cfg.dither.as_ref().map(|d| ChaCha8Rng::seed_from_u64(d.seed));
        Ok(Self {
            history: IoHistory::new(cfg.dims),
            estimate,
            forgetting,
            applied,
            pending_output: None,
            step: 0,
            solver: ActiveSetSolver::new(),
            rng,
            cfg,
        })
    }

    pub fn config(&self) -> &PcacConfig {
        &self.cfg
    }

    pub fn name(&self) -> &str {
        &self.cfg.name
    }

    pub fn estimate(&self) -> &CoefficientEstimate {
        &self.estimate
    }

    pub fn history(&self) -> &IoHistory {
        &self.history
    }

    /// Control currently held by the actuator.
    pub fn applied(&self) -> &DVector<f64> {
        &self.applied
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// Runs one control step on the measurement `y_k` with the command preview
    /// `r_{k+1} .. r_{k+l}` stacked, returning the requested next control.
    pub fn step(&mut self, y_k: &DVector<f64>, preview: &DVector<f64>) -> Result<StepOutput> {
        let dims = self.cfg.dims;
        check_len("measured output", dims.outputs, y_k.len())?;
        check_len(
            "command preview",
            self.cfg.horizon * self.cfg.weights.command_selector().nrows(),
            preview.len(),
        )?;
        if self.pending_output.is_some() {
            return Err(Error::InvalidConfig(
                "step called twice without committing the implemented control".into(),
            ));
        }
        if y_k.iter().chain(preview.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("controller input"));
        }

        let phi = build_regressor(&self.history);
        let error = identification_error(&phi, &self.estimate, y_k)?;
        self.forgetting.record(error.clone())?;
        let beta = forgetting_factor(&self.forgetting, &self.cfg.forgetting, self.step)?;
        self.estimate = rls_update(&self.estimate, &phi, y_k, beta)?;

        let model = realize(&self.estimate.theta, dims)?;
        let state = reconstruct_state(&self.history, y_k, &self.estimate.theta)?;
        let (x1, _) = model_step(&model, &state, &self.applied)?;

        let pm = build_prediction(&model, self.cfg.horizon)?;
        let qp = assemble_qp(
            &pm,
            &x1.x,
            preview,
            &self.cfg.weights,
            &self.cfg.limits,
            &self.applied,
        )?;
        let zero_move_feasible = qp.max_violation(&qp.zero_move()) == 0.0;
        let sol = self.solver.solve(&qp)?;

        let mut u_req = sol.first_control();
        if let (Some(d), Some(rng)) = (&self.cfg.dither, self.rng.as_mut()) {
            if self.step < d.steps {
                for (u, a) in u_req.iter_mut().zip(&d.amplitude) {
                    *u += if rng.random::<bool>() { *a } else { -*a };
                }
            }
        }
        if u_req.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("requested control"));
        }
        self.pending_output = Some(y_k.clone());
        Ok(StepOutput {
            u_req,
            beta,
            identification_error: error,
            qp_iterations: sol.iterations,
            qp_cost: sol.objective,
            kkt: sol.residuals,
            zero_move_feasible,
        })
    }

    /// Records the implemented (saturated) control for the next interval and
    /// shifts `(y_k, u_k)` into the identification history.
    pub fn commit(&mut self, implemented: DVector<f64>) -> Result<()> {
        check_len("implemented control", self.cfg.dims.inputs, implemented.len())?;
        if !self.cfg.limits.magnitude_ok(&implemented) {
            return Err(Error::InvalidConfig(format!(
                "implemented control {:?} violates magnitude bounds",
                implemented.as_slice()
            )));
        }
        let y = self.pending_output.take().ok_or_else(|| {
            Error::InvalidConfig("commit called without a preceding step".into())
        })?;
        let previous = std::mem::replace(&mut self.applied, implemented);
        self.history.push(y, previous)?;
        self.step += 1;
        Ok(())
    }
}
