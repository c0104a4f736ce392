//! Simplified bundle method for nonsmooth, nonconvex objectives (upper-C²
//! functions such as recourse functions) under smooth equality constraints
//! and box bounds.
//!
//! Each iteration solves one convex QP built from a single subgradient and a
//! proximal coefficient `α`, accepts or rejects the step with a ratio test and
//! a backtracking search on the ℓ₁ constraint violation, and switches to an
//! elastic penalty phase when the linearized constraints become inconsistent.

pub mod bundle;
pub mod cli;
pub mod error;
pub mod linesearch;
pub mod oracle;
pub mod problems;
pub mod qp;
pub mod solver;

pub use error::{OracleError, QpError, SolverError};
pub use oracle::{OracleResponse, ProblemSpec};
pub use solver::{solve, SolveReport, SolveStatus, SolverConfig};
