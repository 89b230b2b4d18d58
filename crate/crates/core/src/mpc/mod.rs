//! Receding-horizon optimization over the identified model.

mod prediction;
mod problem;
mod solver;

pub use prediction::{build_prediction, PredictionMatrices};
pub use problem::{LeastSquaresForm, assemble_qp, first_control, BoundSide, LinearBound, MpcWeights, QpProblem};
pub use solver::{
    solve_qp, ActiveConstraint, ActiveSetSolver, KktResiduals, QpSolution, KKT_TOLERANCE,
};

#[cfg(test)]
mod tests;
