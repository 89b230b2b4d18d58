//! Predictive cost adaptive control (PCAC) for sampled-data plants.
//!
//! Each control step identifies an ARX model online with recursive least
//! squares and variable-rate forgetting, realizes it in block observable
//! canonical form, and solves a constrained receding-horizon quadratic
//! program for the next control.

pub mod actuation;
pub mod bocf;
pub mod controller;
pub mod error;
pub mod fstats;
pub mod mpc;
pub mod rls;
pub mod scenario;
pub mod sim;

pub use actuation::{apply_actuation, saturate_magnitude, saturate_rate, SaturationLimits};
pub use bocf::{model_step, realize, reconstruct_state, BocfRealization, BocfState};
pub use controller::{DitherConfig, PcacConfig, PcacController, StepOutput};
pub use error::{Error, Result};
pub use fstats::{f_cdf, f_quantile, regularized_incomplete_beta, FQuantileQuery};
pub use mpc::{
    assemble_qp, build_prediction, first_control, solve_qp, ActiveSetSolver, MpcWeights,
    PredictionMatrices, QpProblem, QpSolution,
};
pub use rls::{
    build_regressor, forgetting_factor, predict_output, rls_update, ArxDims, CoefficientEstimate,
    ForgettingConfig, ForgettingState, IoHistory,
};
pub use scenario::{compute_metrics, read_trace_csv, write_trace_csv, LoopMetrics, Metrics, Scenario};
pub use sim::{
    rk4_step, ClosedLoop, CommandTrajectory, ControlLoop, LtiPlant, Plant, SimulationSettings,
    SimulationTrace, ThreeDofLongitudinalPlant,
};
