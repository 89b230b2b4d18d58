//! Actuator magnitude and move-size saturation.
//!
//! The implemented control is `rate(magnitude(u_req), u_prev)`: the request is
//! first clipped to the magnitude box, then the step away from the previously
//! implemented control is clipped to the move-size band.

use nalgebra::DVector;

use crate::error::{check_len, Error, Result};

/// Per-channel magnitude and move-size bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct SaturationLimits {
    u_min: DVector<f64>,
    u_max: DVector<f64>,
    du_min: DVector<f64>,
    du_max: DVector<f64>,
}

impl SaturationLimits {
    pub fn new(
        u_min: DVector<f64>,
        u_max: DVector<f64>,
        du_min: DVector<f64>,
        du_max: DVector<f64>,
    ) -> Result<Self> {
        let m = u_min.len();
        check_len("saturation u_max", m, u_max.len())?;
        check_len("saturation du_min", m, du_min.len())?;
        check_len("saturation du_max", m, du_max.len())?;
        if m == 0 {
            return Err(Error::InvalidConfig(
                "saturation limits need at least one channel".into(),
            ));
        }
        for i in 0..m {
            let vals = [u_min[i], u_max[i], du_min[i], du_max[i]];
            if vals.iter().any(|v| v.is_nan()) {
                return Err(Error::InvalidConfig(format!("channel {i}: NaN bound")));
            }
            if u_min[i] > u_max[i] {
                return Err(Error::InvalidConfig(format!(
                    "channel {i}: u_min {} > u_max {}",
                    u_min[i], u_max[i]
                )));
            }
            if !(du_min[i] <= 0.0 && 0.0 <= du_max[i]) {
                return Err(Error::InvalidConfig(format!(
                    "channel {i}: move-size band [{}, {}] must contain 0",
                    du_min[i], du_max[i]
                )));
            }
        }
        Ok(Self {
            u_min,
            u_max,
            du_min,
            du_max,
        })
    }

    /// Bounds symmetric about zero: `|u| <= u_abs`, `|du| <= du_abs`.
    pub fn symmetric(u_abs: &[f64], du_abs: &[f64]) -> Result<Self> {
        let u = DVector::from_column_slice(u_abs);
        let du = DVector::from_column_slice(du_abs);
        Self::new(-u.clone(), u, -du.clone(), du)
    }

    pub fn channels(&self) -> usize {
        self.u_min.len()
    }

    pub fn u_min(&self) -> &DVector<f64> {
        &self.u_min
    }

    pub fn u_max(&self) -> &DVector<f64> {
        &self.u_max
    }

    pub fn du_min(&self) -> &DVector<f64> {
        &self.du_min
    }

    pub fn du_max(&self) -> &DVector<f64> {
        &self.du_max
    }

    /// True when `u` lies inside the magnitude box (exact comparison).
    pub fn magnitude_ok(&self, u: &DVector<f64>) -> bool {
        u.len() == self.channels()
            && (0..u.len()).all(|i| self.u_min[i] <= u[i] && u[i] <= self.u_max[i])
    }

    /// True when the move `u - u_prev` lies inside the move-size band (exact comparison).
    pub fn rate_ok(&self, u: &DVector<f64>, u_prev: &DVector<f64>) -> bool {
        u.len() == self.channels()
            && u_prev.len() == self.channels()
            && (0..u.len()).all(|i| {
                let d = u[i] - u_prev[i];
                self.du_min[i] <= d && d <= self.du_max[i]
            })
    }
}

pub fn saturate_magnitude(u: &DVector<f64>, lim: &SaturationLimits) -> Result<DVector<f64>> {
    check_len("saturate_magnitude", lim.channels(), u.len())?;
    Ok(DVector::from_fn(u.len(), |i, _| {
        u[i].clamp(lim.u_min[i], lim.u_max[i])
    }))
}

pub fn saturate_rate(
    u: &DVector<f64>,
    u_prev: &DVector<f64>,
    lim: &SaturationLimits,
) -> Result<DVector<f64>> {
    check_len("saturate_rate", lim.channels(), u.len())?;
    check_len("saturate_rate previous control", lim.channels(), u_prev.len())?;
    Ok(DVector::from_fn(u.len(), |i, _| {
        let d = u[i] - u_prev[i];
        if d > lim.du_max[i] {
            u_prev[i] + lim.du_max[i]
        } else if d < lim.du_min[i] {
            u_prev[i] + lim.du_min[i]
        } else {
            u[i]
        }
    }))
}

/// Converts a requested control into the implemented control.
pub fn apply_actuation(
    u_req: &DVector<f64>,
    u_prev: &DVector<f64>,
    lim: &SaturationLimits,
) -> Result<DVector<f64>> {
    let clipped = saturate_magnitude(u_req, lim)?;
    let mut u = saturate_rate(&clipped, u_prev, lim)?;
    // u_prev + du can round one ulp past a magnitude bound; pull it back
    // without leaving the move-size band.
    for i in 0..u.len() {
        if u[i] > lim.u_max[i] && lim.u_max[i] - u_prev[i] >= lim.du_min[i] {
            u[i] = lim.u_max[i];
        } else if u[i] < lim.u_min[i] && lim.u_min[i] - u_prev[i] <= lim.du_max[i] {
            u[i] = lim.u_min[i];
        }
        // The rate clip itself can round outside the band when |u_prev| is
        // large compared to du; nudge toward u_prev until the exact check holds.
        while u[i] - u_prev[i] > lim.du_max[i] {
            u[i] = u[i].next_down();
        }
        while u[i] - u_prev[i] < lim.du_min[i] {
            u[i] = u[i].next_up();
        }
    }
    Ok(u)
}
