use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::actuation::SaturationLimits;
use crate::controller::{DitherConfig, PcacConfig, PcacController};
use crate::error::{Error, Result};
use crate::mpc::MpcWeights;
use crate::rls::{ArxDims, ForgettingConfig};
use crate::sim::{
    AircraftParams, ClosedLoop, CommandTrajectory, ControlLoop, LtiPlant, Plant, SimulationSettings,
    SimulationTrace, ThreeDofLongitudinalPlant,
};

/// A complete closed-loop experiment: plant, loops, commands and sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub sample_time: f64,
    pub steps: usize,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default)]
    pub seed: u64,
    pub plant: PlantSpec,
    pub loops: Vec<LoopSpec>,
}

fn default_substeps() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantSpec {
    /// `x' = A x + B u`, `y = C x`; matrices are lists of rows.
    Lti {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        c: Vec<Vec<f64>>,
        x0: Vec<f64>,
    },
    /// Nonlinear longitudinal flight; `initial_state` is `[V, gamma, h, theta, q]`.
    ThreeDof {
        initial_state: [f64; 5],
        aircraft: AircraftParams,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopSpec {
    pub name: String,
    pub order: usize,
    pub horizon: usize,
    pub plant_outputs: Vec<usize>,
    pub plant_inputs: Vec<usize>,
    /// Rows of `C_t`, selecting the tracked outputs from this loop's outputs.
    pub command_selector: Vec<Vec<f64>>,
    /// Diagonal of the per-step cost-to-go weight (one entry per tracked output).
    pub q_bar: Vec<f64>,
    /// Diagonal of the terminal weight.
    pub p_bar: Vec<f64>,
    /// Diagonal of the per-step move-size weight (one entry per input).
    pub r: Vec<f64>,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    pub du_min: Vec<f64>,
    pub du_max: Vec<f64>,
    pub theta0: f64,
    pub psi0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forgetting: Option<ForgettingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dither: Option<DitherSpec>,
    /// One trajectory per row of `command_selector`.
    pub commands: Vec<CommandTrajectory>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForgettingSpec {
    pub eta: f64,
    pub tau_n: usize,
    pub tau_d: usize,
    pub alpha_f: f64,
    /// RMS identification-error resolution below which errors cannot
    /// trigger forgetting.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub error_floor: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

/// Seeded binary excitation added to the requested control for `duration` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DitherSpec {
    pub amplitude: Vec<f64>,
    pub duration: f64,
}

const REQUIRED_TOP: [&str; 5] = ["name", "sample_time", "steps", "plant", "loops"];
const REQUIRED_LOOP: [&str; 16] = [
    "name",
    "order",
    "horizon",
    "plant_outputs",
    "plant_inputs",
    "command_selector",
    "q_bar",
    "p_bar",
    "r",
    "u_min",
    "u_max",
    "du_min",
    "du_max",
    "theta0",
    "psi0",
    "commands",
];

impl Scenario {
    /// Parses and validates TOML, listing every missing required key before
    /// type checking.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        let missing = missing_keys(&table);
        if !missing.is_empty() {
            return Err(Error::Validation(
                missing.into_iter().map(|k| format!("missing required key `{k}`")).collect(),
            ));
        }
        let scenario: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Canonical TOML text; parsing it yields an equal scenario.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn settings(&self) -> SimulationSettings {
        SimulationSettings {
            sample_time: self.sample_time,
            steps: self.steps,
            substeps: self.substeps,
        }
    }

    /// Checks every semantic constraint and reports all failures together.
    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        if !(self.sample_time > 0.0 && self.sample_time.is_finite()) {
            issues.push(format!("sample_time = {} must be positive", self.sample_time));
        }
        if self.steps == 0 {
            issues.push("steps must be at least 1".into());
        }
        if self.substeps == 0 {
            issues.push("substeps must be at least 1".into());
        }
        if self.loops.is_empty() {
            issues.push("at least one loop is required".into());
        }
        let plant = match self.build_plant() {
            Ok(p) => Some(p),
            Err(e) => {
                issues.push(format!("plant: {e}"));
                None
            }
        };
        let mut loops = Vec::new();
        for (i, spec) in self.loops.iter().enumerate() {
            if spec.name.is_empty() || !spec.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
                issues.push(format!(
                    "loop name `{}` must be non-empty ASCII letters, digits or '-'",
                    spec.name
                ));
            }
            match self.build_loop(i, self.seed) {
                Ok(l) => loops.push(l),
                Err(Error::InvalidConfig(msg)) => issues.push(format!("loop `{}`: {msg}", spec.name)),
                Err(e) => issues.push(format!("loop `{}`: {e}", spec.name)),
            }
        }
        if let (Some(plant), true) = (plant, loops.len() == self.loops.len() && issues.is_empty()) {
            if let Err(e) = ClosedLoop::new(plant, loops, self.settings()) {
                match e {
                    Error::Validation(list) => issues.extend(list),
                    other => issues.push(other.to_string()),
                }
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(issues))
        }
    }

    pub fn build_plant(&self) -> Result<Box<dyn Plant>> {
        match &self.plant {
            PlantSpec::Lti { a, b, c, x0 } => Ok(Box::new(LtiPlant::new(
                rows_to_matrix("A", a)?,
                rows_to_matrix("B", b)?,
                rows_to_matrix("C", c)?,
                DVector::from_column_slice(x0),
            )?)),
            PlantSpec::ThreeDof {
                initial_state,
                aircraft,
            } => Ok(Box::new(ThreeDofLongitudinalPlant::new(aircraft.clone(), *initial_state)?)),
        }
    }

    /// Builds loop `index`, seeding its dither from `seed + index`.
    pub fn build_loop(&self, index: usize, seed: u64) -> Result<ControlLoop> {
        let spec = &self.loops[index];
        let p = spec.plant_outputs.len();
        let m = spec.plant_inputs.len();
        let dims = ArxDims::new(spec.order, m, p)?;
        let c_t = rows_to_matrix("command_selector", &spec.command_selector)?;
        let pt = c_t.nrows();
        for (label, v, want) in [
            ("q_bar", &spec.q_bar, pt),
            ("p_bar", &spec.p_bar, pt),
            ("r", &spec.r, m),
        ] {
            if v.len() != want {
                return Err(Error::InvalidConfig(format!("{label} has {} entries, expected {want}", v.len())));
            }
        }
        let weights = MpcWeights::diagonal(spec.horizon, &spec.q_bar, &spec.p_bar, &spec.r, c_t)?;
        let vec = |v: &[f64]| DVector::from_column_slice(v);
        let limits = SaturationLimits::new(
            vec(&spec.u_min),
            vec(&spec.u_max),
            vec(&spec.du_min),
            vec(&spec.du_max),
        )?;
        let forgetting = match spec.forgetting {
            Some(f) => ForgettingConfig {
                error_floor: f.error_floor,
                ..ForgettingConfig::new(f.eta, f.tau_n, f.tau_d, f.alpha_f)
            },
            None => ForgettingConfig::disabled(),
        };
        let dither = spec.dither.as_ref().map(|d| DitherConfig {
            amplitude: d.amplitude.clone(),
            steps: (d.duration / self.sample_time).round().max(0.0) as usize,
            seed: seed.wrapping_add(index as u64),
        });
        let cfg = PcacConfig {
            name: spec.name.clone(),
            dims,
            horizon: spec.horizon,
            weights,
            limits,
            theta0_scale: spec.theta0,
            psi0_scale: spec.psi0,
            initial_theta: None,
            forgetting,
            dither,
            output_map: spec.plant_outputs.clone(),
            input_map: spec.plant_inputs.clone(),
        };
        for c in &spec.commands {
            c.validate()?;
        }
        Ok(ControlLoop {
            controller: PcacController::new(cfg)?,
            commands: spec.commands.clone(),
        })
    }

    /// Plant, loops and settings ready to simulate.
    pub fn build(&self) -> Result<ClosedLoop> {
        self.validate()?;
        let loops = (0..self.loops.len())
            .map(|i| self.build_loop(i, self.seed))
            .collect::<Result<Vec<_>>>()?;
        ClosedLoop::new(self.build_plant()?, loops, self.settings())
    }

    pub fn run(&self) -> Result<SimulationTrace> {
        self.build()?.run()
    }

    /// Saturation limits of each loop, in loop order.
    pub fn limits(&self) -> Result<Vec<SaturationLimits>> {
        self.loops
            .iter()
            .map(|l| {
                SaturationLimits::new(
                    DVector::from_column_slice(&l.u_min),
                    DVector::from_column_slice(&l.u_max),
                    DVector::from_column_slice(&l.du_min),
                    DVector::from_column_slice(&l.du_max),
                )
            })
            .collect()
    }
}

fn rows_to_matrix(label: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidConfig(format!("{label} must be a non-empty rectangular list of rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn missing_keys(table: &toml::Table) -> Vec<String> {
    let mut missing: Vec<String> = REQUIRED_TOP
        .iter()
        .filter(|k| !table.contains_key(**k))
        .map(|k| k.to_string())
        .collect();
    if let Some(toml::Value::Table(plant)) = table.get("plant") {
        let required: &[&str] = match plant.get("kind").and_then(toml::Value::as_str) {
            Some("lti") => &["a", "b", "c", "x0"],
            Some("three_dof") => &["initial_state", "aircraft"],
            _ => &["kind"],
        };
        missing.extend(
            required
                .iter()
                .filter(|k| !plant.contains_key(**k))
                .map(|k| format!("plant.{k}")),
        );
    }
    if let Some(toml::Value::Array(loops)) = table.get("loops") {
        for (i, l) in loops.iter().enumerate() {
            if let toml::Value::Table(l) = l {
                missing.extend(
                    REQUIRED_LOOP
                        .iter()
                        .filter(|k| !l.contains_key(**k))
                        .map(|k| format!("loops[{i}].{k}")),
                );
            }
        }
    }
    missing
}
