//! Inner solvers for `min h(X)` over the nonnegative oblique set.

pub mod gp;
pub mod newton;
pub mod simplex;
pub mod ssn;

use serde::Serialize;

use crate::types::{ContractStats, Termination};

pub use gp::{gradient_projection_solve, GPConfig, StepRule};
pub use newton::{newton_solve, NewtonConfig};
pub use simplex::project_delta;
pub use ssn::{solve_qp_subproblem, QpSolution, QuadraticModel, SsnConfig};

/// Outcome of an inner solve.
#[derive(Clone, Debug, Serialize)]
pub struct InnerReport {
    /// `h` at the returned point.
    pub value: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Distance between the last two iterates.
    pub last_step: f64,
    pub contracts: ContractStats,
}
