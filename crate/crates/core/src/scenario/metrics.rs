use nalgebra::DVector;
use serde::Serialize;

use crate::actuation::{saturate_magnitude, SaturationLimits};
use crate::error::{check_len, Error, Result};
use crate::sim::{bound_margin, SimulationTrace};

/// Fraction of the command span used as the settling band.
pub const SETTLING_FRACTION: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoopMetrics {
    pub name: String,
    /// `sum_k |yt_k - r_k|_2`.
    pub cumulative_cost: f64,
    pub rms_error: f64,
    pub max_abs_error: f64,
    /// Largest `|yt - r|_inf` over the final 20% of the steps.
    pub final_window_max_error: f64,
    /// First step after which `|yt_i - r_i|` stays within 2% of each
    /// command's span (or 0.02 when the span is below one unit); absent if
    /// the error never stays inside the band.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_transient_step: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_transient_time: Option<f64>,
    /// Smallest slack of any implemented control to its magnitude or
    /// move-size bounds; zero when a bound is reached.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_constraint_margin: Option<f64>,
    /// Worst bound excess of the implemented controls.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_constraint_violation: Option<f64>,
    pub max_qp_iterations: usize,
    pub mean_qp_iterations: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub steps: usize,
    pub total_cumulative_cost: f64,
    pub loops: Vec<LoopMetrics>,
}

impl Metrics {
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("metrics serialize to TOML")
    }
}

/// Summarizes a trace; constraint violations are reported when `limits`
/// supplies one entry per loop.
pub fn compute_metrics(trace: &SimulationTrace, limits: Option<&[SaturationLimits]>) -> Result<Metrics> {
    if let Some(l) = limits {
        check_len("loop limits", trace.loops.len(), l.len())?;
    }
    let n = trace.steps.len();
    if n == 0 {
        return Err(Error::InvalidConfig("metrics need a nonempty trace".into()));
    }
    let tail_start = n - n / 5;
    let mut loops = Vec::with_capacity(trace.loops.len());
    for (idx, info) in trace.loops.iter().enumerate() {
        let mut cumulative = 0.0;
        let mut sum_sq = 0.0;
        let mut max_abs: f64 = 0.0;
        let mut tail_max: f64 = 0.0;
        let mut last_outside: Option<usize> = None;
        let mut spans = vec![(f64::INFINITY, f64::NEG_INFINITY); info.commands];
        for step in &trace.steps {
            for (i, s) in spans.iter_mut().enumerate() {
                let r = step.loops[idx].r[i];
                *s = (s.0.min(r), s.1.max(r));
            }
        }
        let bands: Vec<f64> = spans
            .iter()
            .map(|&(lo, hi)| SETTLING_FRACTION * (hi - lo).max(1.0))
            .collect();
        let mut iter_sum = 0usize;
        let mut iter_max = 0usize;
        for (k, step) in trace.steps.iter().enumerate() {
            let rec = &step.loops[idx];
            let e = &rec.yt - &rec.r;
            cumulative += e.norm();
            sum_sq += e.norm_squared();
            let inf = e.amax();
            max_abs = max_abs.max(inf);
            if k >= tail_start {
                tail_max = tail_max.max(inf);
            }
            if e.iter().zip(&bands).any(|(v, b)| v.abs() > *b) {
                last_outside = Some(k);
            }
            iter_sum += rec.qp_iterations;
            iter_max = iter_max.max(rec.qp_iterations);
        }
        let learning_transient_step = match last_outside {
            None => Some(0),
            Some(k) if k + 1 < n => Some(k + 1),
            Some(_) => None,
        };
        let learning_transient_time = learning_transient_step.map(|k| trace.steps[k].t);
        let min_constraint_margin = match limits {
            Some(l) => {
                let lim = &l[idx];
                let mut prev = saturate_magnitude(&DVector::zeros(info.inputs), lim)?;
                let mut worst = f64::INFINITY;
                for step in &trace.steps {
                    let u = &step.loops[idx].u;
                    worst = worst.min(bound_margin(lim, u, &prev));
                    prev = u.clone();
                }
                Some(worst)
            }
            None => None,
        };
        let max_constraint_violation = min_constraint_margin.map(|m| (-m).max(0.0));
        loops.push(LoopMetrics {
            name: info.name.clone(),
            cumulative_cost: cumulative,
            rms_error: (sum_sq / n as f64).sqrt(),
            max_abs_error: max_abs,
            final_window_max_error: tail_max,
            learning_transient_step,
            learning_transient_time,
            min_constraint_margin,
            max_constraint_violation,
            max_qp_iterations: iter_max,
            mean_qp_iterations: iter_sum as f64 / n as f64,
        });
    }
    Ok(Metrics {
        steps: n,
        total_cumulative_cost: loops.iter().map(|l| l.cumulative_cost).sum(),
        loops,
    })
}
