//! Shared workloads for the criterion benchmarks.
//!
//! Sizes default to the altitude loop of the `linear_long_ramp` fixture:
//! order 6, one input, two outputs, horizon 40.

use nalgebra::{DMatrix, DVector};
use pcac_core::{
    assemble_qp, build_prediction, build_regressor, realize, rls_update, ActiveSetSolver, ArxDims,
    CoefficientEstimate, IoHistory, MpcWeights, QpProblem, SaturationLimits, Scenario,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ORDER: usize = 6;
pub const INPUTS: usize = 1;
pub const OUTPUTS: usize = 2;
pub const HORIZON: usize = 40;

const RAMP_FIXTURE: &str = include_str!("../../../scenarios/linear_long_ramp.toml");

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

/// One RLS update on a warmed-up estimate with a fresh regressor.
pub struct RlsWorkload {
    estimate: CoefficientEstimate,
    phi: DMatrix<f64>,
    y: DVector<f64>,
}

impl RlsWorkload {
    pub fn new(seed: u64) -> Self {
        let dims = ArxDims::new(ORDER, INPUTS, OUTPUTS).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut estimate = CoefficientEstimate::cold_start(dims, 0.01, 1e5).unwrap();
        let mut hist = IoHistory::new(dims);
        for _ in 0..3 * ORDER {
            let phi = build_regressor(&hist);
            let y = random_vec(&mut rng, OUTPUTS);
            estimate = rls_update(&estimate, &phi, &y, 1.0).unwrap();
            hist.push(y, random_vec(&mut rng, INPUTS)).unwrap();
        }
        Self { estimate, phi: build_regressor(&hist), y: random_vec(&mut rng, OUTPUTS) }
    }

    pub fn run(&self, beta: f64) -> CoefficientEstimate {
        rls_update(&self.estimate, &self.phi, &self.y, beta).unwrap()
    }
}

/// A tracking QP at the benchmark size with tight move-size bounds, so the
/// active set is usually nonempty.
pub struct QpWorkload {
    pub qp: QpProblem,
}

impl QpWorkload {
    pub fn new(seed: u64) -> Self {
        let dims = ArxDims::new(ORDER, INPUTS, OUTPUTS).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Small coefficients keep the realization stable.
        let theta = random_vec(&mut rng, dims.theta_len()) * 0.1;
        let model = realize(&theta, dims).unwrap();
        let pm = build_prediction(&model, HORIZON).unwrap();
        let mut selector = DMatrix::zeros(1, OUTPUTS);
        selector[(0, 0)] = 1.0;
        let w = MpcWeights::diagonal(HORIZON, &[0.1], &[0.1], &[0.1], selector).unwrap();
        let lim = SaturationLimits::symmetric(&[10.0], &[0.5]).unwrap();
        let x1 = random_vec(&mut rng, ORDER * OUTPUTS);
        let commands = DVector::from_element(HORIZON, 10.0);
        let qp = assemble_qp(&pm, &x1, &commands, &w, &lim, &DVector::zeros(INPUTS)).unwrap();
        Self { qp }
    }

    /// Solves from a cold active set.
    pub fn solve_cold(&self) -> DVector<f64> {
        ActiveSetSolver::new().solve(&self.qp).unwrap().u
    }
}

/// The ramp fixture truncated to `steps` samples.
pub fn ramp_scenario(steps: usize) -> Scenario {
    let mut scenario = Scenario::from_toml_str(RAMP_FIXTURE).unwrap();
    scenario.steps = steps;
    scenario
}

/// Runs the closed loop and returns the final tracking error.
pub fn run_closed_loop(scenario: &Scenario) -> f64 {
    let trace = scenario.run().unwrap();
    let last = &trace.steps.last().unwrap().loops[0];
    (&last.yt - &last.r).amax()
}
