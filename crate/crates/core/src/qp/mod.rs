//! Dense convex quadratic programming shared by the controller and the estimator.

mod admm;
mod problem;

pub use admm::{solve, QpSettings, QpSolution, QpSolver, QpStatus, WarmStart};
pub use problem::{kkt_check, Duals, KktResiduals, QpProblem, PSD_TOLERANCE};
