//! Optimization over matrices with orthonormal, nonnegative columns by an
//! exact penalty method on the nonnegative oblique set.
//!
//! The main entry point is [`driver::ep4orth_solve`]; the application
//! objectives and instance generators live in [`problems`].

pub mod bench;
pub mod driver;
pub mod error;
pub mod io;
pub mod manifold;
pub mod objective;
pub mod penalty;
pub mod problems;
pub mod rounding;
pub mod subsolvers;
pub mod types;

pub use driver::{ep4orth_solve, feasible_init, postprocess, PenaltySchedule, Refinement, SolveOptions};
pub use error::{Error, Result};
pub use objective::Objective;
pub use rounding::{feasibility_violation, round, FeasiblePoint};
pub use types::{DriverConfig, Mat, ObliqueMatrix, PenaltyContext, PenaltyParams, SolveReport, Termination};
