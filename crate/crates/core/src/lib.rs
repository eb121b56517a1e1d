//! Relaxed linearized augmented Lagrangian (LALM) solvers for composite
//! convex optimization, with ordered-subsets acceleration and a desk-scale
//! 2-D CT reconstruction pipeline.
//!
//! The crate is organized around the composite problem
//! `min g_y(Ax) + phi(x) + psi(x)` where `g_y` is a quadratic data-fit term,
//! `phi` has a cheap proximal operator and `psi` is smooth with a diagonal
//! majorizer. Solvers include relaxed ADMM, simple-relaxed LALM, the
//! proposed-relaxed LALM in three algebraically equivalent forms, their
//! ordered-subsets variants with continuation, and OS-SQS / FGM-restart
//! baselines. The `analysis` module provides duality gaps, convergence-rate
//! bound evaluators and the spectral analysis of the underlying second-order
//! recursion.

pub mod analysis;
pub mod ct;
pub mod error;
pub mod lasso;
pub mod operators;
pub mod problem;
pub mod solvers;

pub use error::Error;
pub use operators::{DiagonalMajorizer, LinearOperator};
pub use problem::{CompositeProblem, ProxSpec, RegularizerSpec, SmoothSpec};
pub use solvers::{ConvergenceRecord, RhoMode, SolverConfig};
