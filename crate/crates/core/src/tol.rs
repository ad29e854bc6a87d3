//! Numerical tolerances shared across the crate.
//!
//! All values are absolute in double precision and sized for dense problems
//! with dimension at most 64.

/// Allowed deviation of a squared norm from one.
pub const NORM: f64 = 1e-10;
/// Allowed entrywise deviation of `H` from `H^dagger`.
pub const HERMITIAN: f64 = 1e-10;
/// Allowed entrywise deviation of `U^dagger U` from the identity.
pub const UNITARY: f64 = 1e-10;
/// Allowed deviation of pairwise overlaps from orthonormality.
pub const ORTHONORMAL: f64 = 1e-10;
/// Smallest Gram-Schmidt pivot accepted as linearly independent.
pub const RANK: f64 = 1e-8;
/// Most negative Gram eigenvalue still treated as positive semidefinite.
pub const PSD: f64 = 1e-10;
/// Allowed `|sum of eigenvalues|` for a trace-zero candidate.
pub const GAUGE: f64 = 1e-9;
