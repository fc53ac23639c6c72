//! Mutual-information-regularized pseudo-label assignment.
//!
//! - [`matrix`]: row-stochastic containers, softmax, seeded instances
//! - [`objective`]: entropy, MI and KL estimates and the assignment objective
//! - [`solver`]: the marginal fixed-point solver and its KKT residual
//! - [`oracle`]: independent solvers used to certify the fixed-point solver
//! - [`sinkhorn`]: equipartition Sinkhorn-Knopp baseline and convergence traces
//! - [`trainer`]: a small clustering-based representation learner
//! - [`io`]: CSV and JSON matrix files

pub mod error;
pub mod io;
pub mod matrix;
pub mod objective;
pub mod oracle;
pub mod sinkhorn;
pub mod solver;
pub mod trainer;

pub use error::{MiraError, Result};
pub use matrix::{LogitMatrix, MarginalVector, Matrix, ProbMatrix};
pub use objective::ObjectiveBreakdown;
pub use solver::{AssignmentResult, SolverConfig};
