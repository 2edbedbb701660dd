//! Block Lanczos solver for large-scale quadratic minimization with
//! orthogonality constraints,
//!
//! ```text
//! min  tr(UᵀHU) + 2 tr(UᵀG)   over   U ∈ ℝ^{n×ℓ},  UᵀU = I.
//! ```
//!
//! The solver projects the problem onto a block Krylov subspace built from
//! `G`, solves the small projected problem with a Riemannian trust-region
//! method and lifts the result back. The `verify` module evaluates the
//! convergence envelopes of the method on small instances against dense
//! oracles.

pub mod baselines;
pub mod driver;
pub mod error;
pub mod lanczos;
pub mod linalg;
pub mod mtx;
pub mod problems;
pub mod report;
pub mod rtr;
pub mod verify;

pub use driver::{solve, solve_traced, QmpoProblem, SolveReport, SolverConfig, Termination};
pub use error::{QmpoError, Result};
pub use lanczos::BlockLanczos;
pub use linalg::{CsrMatrix, Mat, SymmetricOperator};
pub use rtr::{ReducedProblem, RtrConfig, RtrResult, StiefelPoint};
