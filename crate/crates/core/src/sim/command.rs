use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-linear command through `(time, value)` knots, held constant
/// before the first knot and after the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandTrajectory {
    pub knots: Vec<[f64; 2]>,
}

impl CommandTrajectory {
    pub fn new(knots: Vec<[f64; 2]>) -> Result<Self> {
        let c = Self { knots };
        c.validate()?;
        Ok(c)
    }

    pub fn constant(value: f64) -> Self {
        Self {
            knots: vec![[0.0, value]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.knots.is_empty() {
            return Err(Error::InvalidConfig("command needs at least one knot".into()));
        }
        if self.knots.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("command knots must be finite".into()));
        }
        if self.knots[0][0] > 0.0 {
            return Err(Error::InvalidConfig(format!(
                "command starts at t = {} and leaves a gap before t = 0",
                self.knots[0][0]
            )));
        }
        if self.knots.windows(2).any(|w| w[1][0] < w[0][0]) {
            return Err(Error::InvalidConfig("command knot times must be nondecreasing".into()));
        }
        Ok(())
    }

    pub fn sample(&self, t: f64) -> f64 {
        let k = &self.knots;
        let first = k[0];
        if t <= first[0] {
            return first[1];
        }
        // First knot strictly after t; knots at equal times make a step.
        let idx = k.partition_point(|p| p[0] <= t);
        if idx == k.len() {
            return k[idx - 1][1];
        }
        let ([t0, v0], [t1, v1]) = (k[idx - 1], k[idx]);
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    /// Smallest and largest value the command takes.
    pub fn range(&self) -> (f64, f64) {
        self.knots
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[1]), hi.max(p[1])))
    }
}
