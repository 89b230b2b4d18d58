use nalgebra::{DMatrix, DVector};

use crate::actuation::apply_actuation;
use crate::controller::{PcacController, StepOutput};
use crate::error::{Error, Result};
use crate::sim::command::CommandTrajectory;
use crate::sim::integrator::rk4_step;
use crate::sim::plants::Plant;

/// Sampling and integration settings for a closed-loop run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationSettings {
    pub sample_time: f64,
    pub steps: usize,
    /// Runge-Kutta substeps per sample interval.
    pub substeps: usize,
}

/// A controller together with the commands for its tracked outputs.
#[derive(Debug, Clone)]
pub struct ControlLoop {
    pub controller: PcacController,
    /// One trajectory per row of the command selector.
    pub commands: Vec<CommandTrajectory>,
}

impl ControlLoop {
    fn command_at(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(self.commands.len(), self.commands.iter().map(|c| c.sample(t)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopInfo {
    pub name: String,
    pub outputs: usize,
    pub commands: usize,
    pub inputs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopRecord {
    pub r: DVector<f64>,
    pub y: DVector<f64>,
    pub yt: DVector<f64>,
    pub u_req: DVector<f64>,
    /// Control implemented from `u_req`. The plant holds the previous
    /// implemented control over `[t_k, t_{k+1}]` and this one over the
    /// interval after that.
    pub u: DVector<f64>,
    pub beta: f64,
    pub qp_iterations: usize,
    pub qp_cost: f64,
    /// `|theta_{k+1}|_2` after this step's update; absent for traces read
    /// back from CSV, which does not store it.
    pub theta_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub t: f64,
    pub loops: Vec<LoopRecord>,
}

/// Per-loop solver health over a run; not part of the CSV trace.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoopDiagnostics {
    pub max_kkt_residual: f64,
    pub max_qp_iterations: usize,
    pub zero_move_feasible_steps: usize,
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub sample_time: f64,
    pub loops: Vec<LoopInfo>,
    pub steps: Vec<StepRecord>,
    /// Empty when the trace was read back from disk.
    pub diagnostics: Vec<LoopDiagnostics>,
}

/// Stepwise closed-loop simulation of one plant under one or more loops.
#[derive(Debug)]
pub struct ClosedLoop {
    plant: Box<dyn Plant>,
    loops: Vec<ControlLoop>,
    settings: SimulationSettings,
    x: DVector<f64>,
    k: usize,
    trace: SimulationTrace,
}

impl ClosedLoop {
    pub fn new(plant: Box<dyn Plant>, loops: Vec<ControlLoop>, settings: SimulationSettings) -> Result<Self> {
        validate_wiring(plant.as_ref(), &loops, &settings)?;
        let infos = loops
            .iter()
            .map(|l| {
                let c = l.controller.config();
                LoopInfo {
                    name: c.name.clone(),
                    outputs: c.dims.outputs,
                    commands: l.commands.len(),
                    inputs: c.dims.inputs,
                }
            })
            .collect();
        let n_loops = loops.len();
        Ok(Self {
            x: plant.initial_state(),
            trace: SimulationTrace {
                sample_time: settings.sample_time,
                loops: infos,
                steps: Vec::with_capacity(settings.steps),
                diagnostics: vec![LoopDiagnostics::default(); n_loops],
            },
            plant,
            loops,
            settings,
            k: 0,
        })
    }

    pub fn loops(&self) -> &[ControlLoop] {
        &self.loops
    }

    pub fn state(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn steps_taken(&self) -> usize {
        self.k
    }

    pub fn trace(&self) -> &SimulationTrace {
        &self.trace
    }

    /// Advances one sample interval, returning each loop's controller output.
    pub fn step(&mut self) -> Result<Vec<StepOutput>> {
        let k = self.k;
        if k >= self.settings.steps {
            return Err(Error::InvalidConfig(format!(
                "simulation already ran its {} configured steps",
                self.settings.steps
            )));
        }
        let ts = self.settings.sample_time;
        let t = k as f64 * ts;
        let y = self.plant.output(&self.x).map_err(|e| e.at_step(k, "plant"))?;

        let mut outputs = Vec::with_capacity(self.loops.len());
        let mut records = Vec::with_capacity(self.loops.len());
        let mut implemented = Vec::with_capacity(self.loops.len());
        for (idx, lp) in self.loops.iter_mut().enumerate() {
            let ctrl = &lp.controller;
            let cfg = ctrl.config();
            let name = cfg.name.clone();
            let y_loop = DVector::from_iterator(cfg.output_map.len(), cfg.output_map.iter().map(|&i| y[i]));
            let pt = lp.commands.len();
            let horizon = cfg.horizon;
            let mut preview = DVector::zeros(horizon * pt);
            for i in 0..horizon {
                preview
                    .rows_mut(i * pt, pt)
                    .copy_from(&lp.command_at((k + i + 1) as f64 * ts));
            }
            let r = lp.command_at(t);
            let yt = cfg.weights.command_selector() * &y_loop;

            let out = lp
                .controller
                .step(&y_loop, &preview)
                .map_err(|e| e.at_step(k, &name))?;
            let ctrl = &lp.controller;
            let lim = &ctrl.config().limits;
            let u = apply_actuation(&out.u_req, ctrl.applied(), lim).map_err(|e| e.at_step(k, &name))?;
            if !lim.magnitude_ok(&u) || !lim.rate_ok(&u, ctrl.applied()) {
                return Err(Error::ConstraintViolation(format!("{:?}", u.as_slice())).at_step(k, &name));
            }
            if !out.zero_move_feasible {
                return Err(Error::QpCertificate("hold-last-control sequence is infeasible".into())
                    .at_step(k, &name));
            }

            let diag = &mut self.trace.diagnostics[idx];
            diag.max_kkt_residual = diag.max_kkt_residual.max(out.kkt.max());
            diag.max_qp_iterations = diag.max_qp_iterations.max(out.qp_iterations);
            diag.zero_move_feasible_steps += 1;
            diag.max_violation = diag.max_violation.max(bound_violation(lim, &u, ctrl.applied()));

            records.push(LoopRecord {
                r,
                y: y_loop,
                yt,
                u_req: out.u_req.clone(),
                u: u.clone(),
                beta: out.beta,
                qp_iterations: out.qp_iterations,
                qp_cost: out.qp_cost,
                theta_norm: Some(ctrl.estimate().theta.norm()),
            });
            implemented.push(u);
            outputs.push(out);
        }

        let mut u_plant = DVector::zeros(self.plant.input_dim());
        for lp in &self.loops {
            for (j, &i) in lp.controller.config().input_map.iter().enumerate() {
                u_plant[i] = lp.controller.applied()[j];
            }
        }
        let plant = self.plant.as_ref();
        self.x = rk4_step(|x, u| plant.derivative(x, u), &self.x, &u_plant, ts, self.settings.substeps)
            .map_err(|e| e.at_step(k, "plant"))?;

        for (lp, u) in self.loops.iter_mut().zip(implemented) {
            let name = lp.controller.name().to_string();
            lp.controller.commit(u).map_err(|e| e.at_step(k, &name))?;
        }
        self.trace.steps.push(StepRecord { k, t, loops: records });
        self.k += 1;
        Ok(outputs)
    }

    /// Runs the remaining configured steps; on error the trace keeps every
    /// step completed before the failure.
    pub fn run_to_end(&mut self) -> Result<()> {
        while self.k < self.settings.steps {
            self.step()?;
        }
        Ok(())
    }

    /// Runs the remaining configured steps and returns the full trace.
    pub fn run(mut self) -> Result<SimulationTrace> {
        self.run_to_end()?;
        Ok(self.trace)
    }

    pub fn into_trace(self) -> SimulationTrace {
        self.trace
    }
}

/// Largest amount by which `u` exceeds its magnitude or move-size bounds.
pub fn bound_violation(
    lim: &crate::actuation::SaturationLimits,
    u: &DVector<f64>,
    u_prev: &DVector<f64>,
) -> f64 {
    (-bound_margin(lim, u, u_prev)).max(0.0)
}

/// Smallest slack of `u` to its magnitude and move-size bounds; negative
/// when a bound is violated.
pub fn bound_margin(
    lim: &crate::actuation::SaturationLimits,
    u: &DVector<f64>,
    u_prev: &DVector<f64>,
) -> f64 {
    (0..u.len())
        .flat_map(|j| {
            let du = u[j] - u_prev[j];
            [
                u[j] - lim.u_min()[j],
                lim.u_max()[j] - u[j],
                du - lim.du_min()[j],
                lim.du_max()[j] - du,
            ]
        })
        .fold(f64::INFINITY, f64::min)
}

/// Runs `settings.steps` steps of the closed loop.
pub fn run_closed_loop(
    plant: Box<dyn Plant>,
    loops: Vec<ControlLoop>,
    settings: SimulationSettings,
) -> Result<SimulationTrace> {
    ClosedLoop::new(plant, loops, settings)?.run()
}

fn validate_wiring(plant: &dyn Plant, loops: &[ControlLoop], s: &SimulationSettings) -> Result<()> {
    let mut issues = Vec::new();
    if !(s.sample_time > 0.0 && s.sample_time.is_finite()) {
        issues.push(format!("sample time {} must be positive", s.sample_time));
    }
    if s.substeps == 0 {
        issues.push("substeps must be at least 1".into());
    }
    if loops.is_empty() {
        issues.push("at least one control loop is required".into());
    }
    let mut driven = vec![false; plant.input_dim()];
    let mut names = Vec::new();
    for lp in loops {
        let cfg = lp.controller.config();
        if names.contains(&cfg.name) {
            issues.push(format!("loop name `{}` is used twice", cfg.name));
        }
        names.push(cfg.name.clone());
        if lp.commands.len() != cfg.weights.command_selector().nrows() {
            issues.push(format!(
                "loop `{}` has {} commands for {} tracked outputs",
                cfg.name,
                lp.commands.len(),
                cfg.weights.command_selector().nrows()
            ));
        }
        for c in &lp.commands {
            if let Err(e) = c.validate() {
                issues.push(format!("loop `{}`: {e}", cfg.name));
            }
        }
        if let Some(&i) = cfg.output_map.iter().find(|&&i| i >= plant.output_dim()) {
            issues.push(format!("loop `{}` reads plant output {i}, plant has {}", cfg.name, plant.output_dim()));
        }
        for &i in &cfg.input_map {
            if i >= plant.input_dim() {
                issues.push(format!("loop `{}` drives plant input {i}, plant has {}", cfg.name, plant.input_dim()));
            } else if std::mem::replace(&mut driven[i], true) {
                issues.push(format!("plant input {i} is driven by more than one loop"));
            }
        }
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(issues))
    }
}

/// Stacks each record's `yt - r` for a loop as columns.
pub fn tracking_errors(trace: &SimulationTrace, loop_idx: usize) -> DMatrix<f64> {
    let pt = trace.loops[loop_idx].commands;
    DMatrix::from_fn(pt, trace.steps.len(), |i, k| {
        let rec = &trace.steps[k].loops[loop_idx];
        rec.yt[i] - rec.r[i]
    })
}
