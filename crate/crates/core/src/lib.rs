//! Energy-optimal interpolation of quantum evolution.
//!
//! Given target states `|psi_1>, ..., |psi_m>` and times `0 = t_1 < ... < t_m`,
//! find a time-independent Hermitian `H` with
//! `exp(-i H t_i)|psi_1> = e^{i theta_i}|psi_i>` that minimizes `tr(H^2)`.
//!
//! The crate is layered bottom-up:
//!
//! - [`quantum`]: states, Gram matrices, fidelities, Gram-Schmidt, unitary
//!   completion and the Hermitian exponential.
//! - [`problem`]: problem instances, candidates in `(eps, Lambda, theta)`
//!   form and the interpolation constraint residuals.
//! - [`kkt`]: objective, Lagrangian and its stationarity residuals.
//! - [`solver`]: augmented-Lagrangian and least-squares multistart solvers.
//! - [`qbp`]: the closed-form two-state (brachistochrone) solution.
//! - [`special`]: the uniform-spectrum candidate for orthogonal targets at
//!   evenly spaced times.
//! - [`reconstruct`]: turning a candidate into a concrete `H` and checking it
//!   by direct evolution.

pub mod error;
pub mod kkt;
pub mod problem;
pub mod qbp;
pub mod quantum;
pub mod reconstruct;
pub mod solver;
pub mod special;
pub mod tol;

pub use error::{EoiError, Result};
pub use kkt::{KktPoint, Multipliers};
pub use problem::{CountingReport, ProblemSpec, Regime, SolutionCandidate};
pub use qbp::QbpSolution;
pub use quantum::{GramData, StateVector, UnitaryMatrix, C64};
pub use reconstruct::{HamiltonianResult, VerificationReport};
pub use solver::{SolveResult, SolveStatus, SolverConfig};
pub use special::UniformSeed;
