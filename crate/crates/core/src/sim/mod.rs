//! Sampled-data simulation of continuous-time plants under PCAC loops.

mod command;
mod integrator;
mod plants;
mod runner;

pub use command::CommandTrajectory;
pub use integrator::rk4_step;
pub use plants::{AircraftParams, LtiPlant, Plant, ThreeDofLongitudinalPlant};
pub use runner::{
    bound_margin, bound_violation, run_closed_loop, tracking_errors, ClosedLoop, ControlLoop, LoopDiagnostics,
    LoopInfo, LoopRecord, SimulationSettings, SimulationTrace, StepRecord,
};
