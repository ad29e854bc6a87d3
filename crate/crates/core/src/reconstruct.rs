//! From an abstract solution `(eps, Lambda, theta)` to a concrete Hamiltonian
//! in the original basis, and verification by direct evolution.
//!
//! In the eigenbasis of `H` the phased targets `e^{i theta_i} psi_i` have
//! coordinates `A_ki = lambda_k exp(-i eps_k t_i)` (the frame). When the
//! constraints hold, the frame and the phased targets have the same Gram
//! matrix, so a unitary `T` with `T e^{i theta_i} psi_i = A_i` exists. It is
//! built by orthonormalizing both column sets in the same order, completing
//! each to a full basis, and composing. Then `H = T^dagger diag(eps) T`.
//!
//! When `m < n` only the action of `H` on the span of the targets is fixed by
//! the data; the completion pins the remaining freedom deterministically.

use log::debug;
use nalgebra::{DMatrix, DVector};

use crate::error::{EoiError, Result};
use crate::problem::{constraint_residual_norm, ProblemSpec, SolutionCandidate};
use crate::quantum::{
    complete_unitary, hermiticity_residual, pivoted_gram_schmidt, HermitianEigen,
    PhaseConvention, StateVector, UnitaryMatrix, C64,
};
use crate::tol;

/// Fidelity every target must reach for a Hamiltonian to pass verification.
pub const PASS_FIDELITY: f64 = 1.0 - 1e-8;

/// Largest constraint residual norm accepted by [`reconstruct_hamiltonian`].
pub const MAX_INPUT_RESIDUAL: f64 = 1e-7;

/// A reconstructed Hamiltonian with its diagonalizing transform.
#[derive(Debug, Clone)]
pub struct HamiltonianResult {
    /// `H` in the original basis.
    pub matrix: DMatrix<C64>,
    /// `T` with `T H T^dagger = diag(spectrum)`.
    pub transform: UnitaryMatrix,
    pub spectrum: Vec<f64>,
    /// `n x m` frame `A`.
    pub frame: DMatrix<C64>,
}

/// `A_ki = sqrt(Lambda_k) exp(-i eps_k t_i)`.
pub fn build_frame(cand: &SolutionCandidate, times: &[f64]) -> DMatrix<C64> {
    let n = cand.eigenvalues.len();
    DMatrix::from_fn(n, times.len(), |k, i| {
        C64::from_polar(
            cand.weights[k].max(0.0).sqrt(),
            -cand.eigenvalues[k] * times[i],
        )
    })
}

fn columns(m: &DMatrix<C64>) -> Vec<DVector<C64>> {
    m.column_iter().map(|c| c.into_owned()).collect()
}

/// Builds `H` realizing `cand` on the targets of `spec`.
pub fn reconstruct_hamiltonian(
    spec: &ProblemSpec,
    cand: &SolutionCandidate,
) -> Result<HamiltonianResult> {
    let residual = constraint_residual_norm(spec, cand)?;
    if residual > MAX_INPUT_RESIDUAL {
        return Err(EoiError::GramMismatch { residual });
    }
    let n = spec.dimension();
    let frame = build_frame(cand, spec.times());
    let phased: Vec<DVector<C64>> = spec
        .states()
        .iter()
        .zip(&cand.phases)
        .map(|(s, &th)| s.with_phase(th).into_inner())
        .collect();

    let targets = pivoted_gram_schmidt(&phased, tol::RANK, PhaseConvention::PositivePivot);
    if targets.kept.len() < phased.len() {
        debug!(
            "targets have rank {} of {}; pivoting on {:?}",
            targets.kept.len(),
            phased.len(),
            targets.kept
        );
    }

    let frame_cols = columns(&frame);
    let kept_frame: Vec<DVector<C64>> = targets.kept.iter().map(|&i| frame_cols[i].clone()).collect();
    let frame_basis =
        pivoted_gram_schmidt(&kept_frame, f64::MIN_POSITIVE, PhaseConvention::PositivePivot);
    if frame_basis.columns.len() != kept_frame.len() {
        return Err(EoiError::GramMismatch { residual });
    }
    let dependency_tol = (10.0 * residual).max(1e-8);
    for (&idx, &pivot) in targets.kept.iter().zip(&frame_basis.pivots) {
        if (pivot - targets.pivots[idx]).abs() > dependency_tol {
            return Err(EoiError::GramMismatch { residual });
        }
    }
    for i in (0..phased.len()).filter(|i| !targets.kept.contains(i)) {
        let mut w = frame_cols[i].clone();
        for q in &frame_basis.columns {
            let r = q.dotc(&w);
            w.axpy(-r, q, C64::new(1.0, 0.0));
        }
        if w.norm() > dependency_tol {
            return Err(EoiError::GramMismatch { residual });
        }
    }

    let to_states = |cols: Vec<DVector<C64>>| -> Vec<StateVector> {
        cols.into_iter().map(StateVector::from_raw).collect()
    };
    let u_targets = complete_unitary(&to_states(targets.columns), n)?;
    let u_frame = complete_unitary(&to_states(frame_basis.columns), n)?;
    let t = u_frame.matrix() * u_targets.matrix().adjoint();

    let diag = DMatrix::from_diagonal(&DVector::from_iterator(
        n,
        cand.eigenvalues.iter().map(|&e| C64::new(e, 0.0)),
    ));
    let h = t.adjoint() * diag * &t;
    let h = (&h + h.adjoint()).scale(0.5);
    Ok(HamiltonianResult {
        matrix: h,
        transform: UnitaryMatrix::from_raw(t),
        spectrum: cand.eigenvalues.clone(),
        frame,
    })
}

/// Outcome of evolving `psi_1` under a Hamiltonian and comparing with every
/// target.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    /// `|<psi_i| exp(-i H t_i) |psi_1>|` per target.
    pub fidelities: Vec<f64>,
    /// `arg <psi_i| exp(-i H t_i) |psi_1>`, the recovered `theta_i`.
    pub phases: Vec<f64>,
    /// `tr(H^2)`.
    pub objective: f64,
    /// `Re tr(H)`.
    pub trace: f64,
    pub hermiticity_residual: f64,
    pub passed: bool,
}

impl VerificationReport {
    pub fn min_fidelity(&self) -> f64 {
        self.fidelities.iter().copied().fold(1.0, f64::min)
    }
}

/// Verifies a reconstructed Hamiltonian.
pub fn verify(spec: &ProblemSpec, ham: &HamiltonianResult) -> Result<VerificationReport> {
    verify_matrix(spec, &ham.matrix)
}

/// Verifies a bare matrix against `spec`.
///
/// Evolution uses the Hermitian part of `h`; a hermiticity residual above
/// tolerance fails the report.
pub fn verify_matrix(spec: &ProblemSpec, h: &DMatrix<C64>) -> Result<VerificationReport> {
    let n = spec.dimension();
    if h.nrows() != n || h.ncols() != n {
        return Err(EoiError::DimensionMismatch {
            expected: n,
            found: h.nrows(),
        });
    }
    let herm = hermiticity_residual(h);
    let sym = (h + h.adjoint()).scale(0.5);
    let eig = HermitianEigen::new(&sym)?;
    let psi1 = &spec.states()[0];
    let mut fidelities = Vec::with_capacity(spec.num_targets());
    let mut phases = Vec::with_capacity(spec.num_targets());
    for (target, &t) in spec.states().iter().zip(spec.times()) {
        let evolved = eig.evolve(t, psi1)?;
        let overlap = target.components().dotc(evolved.components());
        fidelities.push(overlap.norm().min(1.0));
        phases.push(overlap.arg());
    }
    let objective = h.iter().map(|z| z.norm_sqr()).sum();
    let trace = h.trace().re;
    let scale = h.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let passed = herm <= tol::HERMITIAN * scale && fidelities.iter().all(|&f| f >= PASS_FIDELITY);
    Ok(VerificationReport {
        fidelities,
        phases,
        objective,
        trace,
        hermiticity_residual: herm,
        passed,
    })
}
