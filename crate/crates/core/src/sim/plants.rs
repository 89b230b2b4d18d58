use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Continuous-time plant `x' = f(x, u)`, `y = h(x)`.
pub trait Plant: std::fmt::Debug {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn initial_state(&self) -> DVector<f64>;
    fn derivative(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>>;
    fn output(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
}

/// `x' = A x + B u`, `y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiPlant {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    x0: DVector<f64>,
}

impl LtiPlant {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, x0: DVector<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || b.ncols() == 0 || c.nrows() == 0 {
            return Err(Error::InvalidConfig("LTI plant matrices must be non-empty".into()));
        }
        check_len("A columns", n, a.ncols())?;
        check_len("B rows", n, b.nrows())?;
        check_len("C columns", n, c.ncols())?;
        check_len("initial state", n, x0.len())?;
        if a.iter().chain(b.iter()).chain(c.iter()).chain(x0.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("LTI plant matrices"));
        }
        Ok(Self { a, b, c, x0 })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
}

impl Plant for LtiPlant {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    fn initial_state(&self) -> DVector<f64> {
        self.x0.clone()
    }

    fn derivative(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("plant state", self.state_dim(), x.len())?;
        check_len("plant input", self.input_dim(), u.len())?;
        Ok(&self.a * x + &self.b * u)
    }

    fn output(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("plant state", self.state_dim(), x.len())?;
        Ok(&self.c * x)
    }
}

/// Rigid-body aerodynamic and mass data for longitudinal flight. Angles in
/// the coefficients are in radians; `cm_q` multiplies `q c / (2 V)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AircraftParams {
    pub mass: f64,
    pub wing_area: f64,
    pub chord: f64,
    pub air_density: f64,
    pub gravity: f64,
    pub pitch_inertia: f64,
    pub cl0: f64,
    pub cl_alpha: f64,
    pub cl_elevator: f64,
    pub cd0: f64,
    pub induced_drag: f64,
    pub cm0: f64,
    pub cm_alpha: f64,
    pub cm_q: f64,
    pub cm_elevator: f64,
    pub thrust_max: f64,
    /// Throttle setting added to the commanded throttle increment.
    pub throttle_base: f64,
}

impl AircraftParams {
    fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("wing_area", self.wing_area),
            ("chord", self.chord),
            ("air_density", self.air_density),
            ("gravity", self.gravity),
            ("pitch_inertia", self.pitch_inertia),
            ("thrust_max", self.thrust_max),
        ];
        let mut issues: Vec<String> = positive
            .iter()
            .filter(|(_, v)| !(*v > 0.0 && v.is_finite()))
            .map(|(k, v)| format!("{k} = {v} must be positive"))
            .collect();
        let finite = [
            self.cl0,
            self.cl_alpha,
            self.cl_elevator,
            self.cd0,
            self.induced_drag,
            self.cm0,
            self.cm_alpha,
            self.cm_q,
            self.cm_elevator,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            issues.push("aerodynamic coefficients must be finite".into());
        }
        if !(0.0..=1.0).contains(&self.throttle_base) {
            issues.push(format!("throttle_base = {} must lie in [0, 1]", self.throttle_base));
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(issues.join("; ")))
        }
    }
}

/// Nonlinear three-degree-of-freedom longitudinal flight model.
///
/// State `[V, gamma, h, theta, q]` in SI units and radians. Inputs are the
/// elevator deflection in degrees and a throttle increment added to
/// `throttle_base` (total throttle clamped to `[0, 1]`). Outputs are
/// `[h - h_ref, alpha (deg), V - V_ref, theta (deg), q (deg/s)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeDofLongitudinalPlant {
    params: AircraftParams,
    x0: DVector<f64>,
    h_ref: f64,
    v_ref: f64,
}

impl ThreeDofLongitudinalPlant {
    pub const OUTPUT_NAMES: [&'static str; 5] = ["altitude", "alpha", "airspeed", "pitch", "pitch_rate"];
    pub const INPUT_NAMES: [&'static str; 2] = ["elevator", "throttle"];

    /// `initial` is `[V, gamma, h, theta, q]`; the output references default
    /// to the initial altitude and airspeed.
    pub fn new(params: AircraftParams, initial: [f64; 5]) -> Result<Self> {
        params.validate()?;
        if initial.iter().any(|v| !v.is_finite()) || initial[0] <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "initial state {initial:?} must be finite with positive airspeed"
            )));
        }
        Ok(Self {
            params,
            h_ref: initial[2],
            v_ref: initial[0],
            x0: DVector::from_column_slice(&initial),
        })
    }

    pub fn params(&self) -> &AircraftParams {
        &self.params
    }

    /// Lift, drag, thrust and pitching moment at state `x` and input `u`.
    fn forces(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<[f64; 5]> {
        let pr = &self.params;
        let (v, gamma, theta, q) = (x[0], x[1], x[3], x[4]);
        if v.is_nan() || v <= 0.0 {
            return Err(Error::PlantDomain(format!("airspeed {v} is not positive")));
        }
        let alpha = theta - gamma;
        let elevator = u[0].to_radians();
        let throttle = (pr.throttle_base + u[1]).clamp(0.0, 1.0);
        let qbar_s = 0.5 * pr.air_density * v * v * pr.wing_area;
        let cl = pr.cl0 + pr.cl_alpha * alpha + pr.cl_elevator * elevator;
        let lift = qbar_s * cl;
        let drag = qbar_s * (pr.cd0 + pr.induced_drag * cl * cl);
        let thrust = throttle * pr.thrust_max;
        let cm = pr.cm0
            + pr.cm_alpha * alpha
            + pr.cm_q * q * pr.chord / (2.0 * v)
            + pr.cm_elevator * elevator;
        let moment = qbar_s * pr.chord * cm;
        Ok([alpha, lift, drag, thrust, moment])
    }
}

impl Plant for ThreeDofLongitudinalPlant {
    fn state_dim(&self) -> usize {
        5
    }

    fn input_dim(&self) -> usize {
        2
    }

    fn output_dim(&self) -> usize {
        5
    }

    fn initial_state(&self) -> DVector<f64> {
        self.x0.clone()
    }

    fn derivative(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("plant state", 5, x.len())?;
        check_len("plant input", 2, u.len())?;
        let pr = &self.params;
        let [alpha, lift, drag, thrust, moment] = self.forces(x, u)?;
        let (v, gamma, q) = (x[0], x[1], x[4]);
        let (m, g) = (pr.mass, pr.gravity);
        Ok(DVector::from_column_slice(&[
            (thrust * alpha.cos() - drag) / m - g * gamma.sin(),
            (lift + thrust * alpha.sin()) / (m * v) - g * gamma.cos() / v,
            v * gamma.sin(),
            q,
            moment / pr.pitch_inertia,
        ]))
    }

    fn output(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("plant state", 5, x.len())?;
        if x[0].is_nan() || x[0] <= 0.0 {
            return Err(Error::PlantDomain(format!("airspeed {} is not positive", x[0])));
        }
        Ok(DVector::from_column_slice(&[
            x[2] - self.h_ref,
            (x[3] - x[1]).to_degrees(),
            x[0] - self.v_ref,
            x[3].to_degrees(),
            x[4].to_degrees(),
        ]))
    }
}
