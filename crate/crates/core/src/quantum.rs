//! Dense complex linear algebra for finite-dimensional pure states.
//!
//! Everything here is a pure function over immutable values. Matrices are
//! `nalgebra` dynamic matrices of `Complex64`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{EoiError, Result};
use crate::tol;

pub type C64 = Complex64;

/// A normalized pure state `|psi>` in an `n`-dimensional Hilbert space.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(DVector<C64>);

impl StateVector {
    /// Wraps `components`, rejecting empty or non-normalized input.
    pub fn new(components: DVector<C64>) -> Result<Self> {
        if components.is_empty() {
            return Err(EoiError::Empty("state vector"));
        }
        let deviation = components.norm_squared() - 1.0;
        if deviation.abs() > tol::NORM {
            return Err(EoiError::NotNormalized { index: 0, deviation });
        }
        Ok(Self(components))
    }

    /// Builds a state from amplitudes, dividing by the norm.
    pub fn normalized(components: DVector<C64>) -> Result<Self> {
        if components.is_empty() {
            return Err(EoiError::Empty("state vector"));
        }
        let norm = components.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(EoiError::NotNormalized { index: 0, deviation: -1.0 });
        }
        Ok(Self(components.unscale(norm)))
    }

    pub fn from_slice(components: &[C64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(components))
    }

    /// The `k`-th standard basis vector of dimension `n`.
    ///
    /// Panics if `k >= n`.
    pub fn basis(n: usize, k: usize) -> Self {
        assert!(k < n, "basis index {k} out of range for dimension {n}");
        let mut v = DVector::zeros(n);
        v[k] = C64::new(1.0, 0.0);
        Self(v)
    }

    pub(crate) fn from_raw(components: DVector<C64>) -> Self {
        Self(components)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &DVector<C64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<C64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// `e^{i phi} |psi>`.
    pub fn with_phase(&self, phi: f64) -> Self {
        Self(self.0.scale_complex(C64::from_polar(1.0, phi)))
    }
}

trait ScaleComplex {
    fn scale_complex(&self, z: C64) -> Self;
}

impl ScaleComplex for DVector<C64> {
    fn scale_complex(&self, z: C64) -> Self {
        self.map(|x| x * z)
    }
}

/// The `m x m` Gram matrix `Delta_ij = <psi_i|psi_j>` of a list of targets.
#[derive(Debug, Clone, PartialEq)]
pub struct GramData(DMatrix<C64>);

impl GramData {
    pub fn entries(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    /// Largest entrywise distance from the identity matrix.
    pub fn distance_from_identity(&self) -> f64 {
        let m = self.size();
        let mut worst = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((self.0[(i, j)] - C64::new(target, 0.0)).norm());
            }
        }
        worst
    }

    pub fn is_identity(&self, tolerance: f64) -> bool {
        self.distance_from_identity() <= tolerance
    }

    /// Smallest eigenvalue; non-negative up to `tol::PSD` for valid data.
    pub fn min_eigenvalue(&self) -> f64 {
        self.0
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// An `n x n` unitary matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix(DMatrix<C64>);

impl UnitaryMatrix {
    /// Wraps `matrix` after checking `U^dagger U = U U^dagger = I`.
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(EoiError::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        let residual = unitarity_residual(&matrix);
        if residual > tol::UNITARY {
            return Err(EoiError::NotOrthonormal { residual });
        }
        Ok(Self(matrix))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub(crate) fn from_raw(matrix: DMatrix<C64>) -> Self {
        Self(matrix)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        if psi.dim() != self.dim() {
            return Err(EoiError::DimensionMismatch {
                expected: self.dim(),
                found: psi.dim(),
            });
        }
        Ok(StateVector(&self.0 * psi.components()))
    }
}

/// Max entrywise deviation of `U^dagger U` and `U U^dagger` from `I`.
pub fn unitarity_residual(u: &DMatrix<C64>) -> f64 {
    let n = u.nrows();
    let eye = DMatrix::<C64>::identity(n, n);
    let left = (u.adjoint() * u - &eye).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let right = (u * u.adjoint() - &eye).iter().map(|z| z.norm()).fold(0.0, f64::max);
    left.max(right)
}

/// Max entrywise `|H_ij - conj(H_ji)|`.
pub fn hermiticity_residual(h: &DMatrix<C64>) -> f64 {
    let n = h.nrows().min(h.ncols());
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..=i {
            worst = worst.max((h[(i, j)] - h[(j, i)].conj()).norm());
        }
    }
    worst
}

fn check_same_dim(a: &StateVector, b: &StateVector) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(EoiError::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

/// `<a|b> = sum_k conj(a_k) b_k`.
pub fn inner_product(a: &StateVector, b: &StateVector) -> Result<C64> {
    check_same_dim(a, b)?;
    Ok(a.0.dotc(&b.0))
}

/// Gram matrix of the given states.
pub fn gram_matrix(states: &[StateVector]) -> Result<GramData> {
    let first = states.first().ok_or(EoiError::Empty("state list"))?;
    for s in states {
        check_same_dim(first, s)?;
    }
    let m = states.len();
    let mut g = DMatrix::<C64>::zeros(m, m);
    for i in 0..m {
        g[(i, i)] = C64::new(states[i].0.norm_squared(), 0.0);
        for j in 0..i {
            let z = states[i].0.dotc(&states[j].0);
            g[(i, j)] = z;
            g[(j, i)] = z.conj();
        }
    }
    Ok(GramData(g))
}

/// `|<a|b>|`, clamped to `[0, 1]`; one exactly when the states agree up to a
/// global phase.
pub fn phase_invariant_fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(inner_product(a, b)?.norm().min(1.0))
}

/// Eigendecomposition `H = V diag(values) V^dagger` of a Hermitian matrix,
/// eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<C64>,
}

impl HermitianEigen {
    pub fn new(h: &DMatrix<C64>) -> Result<Self> {
        if !h.is_square() {
            return Err(EoiError::DimensionMismatch {
                expected: h.nrows(),
                found: h.ncols(),
            });
        }
        let scale = h.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let residual = hermiticity_residual(h);
        if residual > tol::HERMITIAN * scale {
            return Err(EoiError::NotHermitian { residual });
        }
        let sym = (h + h.adjoint()).scale(0.5);
        let eig = sym.symmetric_eigen();
        let n = h.nrows();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
        let mut vectors = DMatrix::<C64>::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        Ok(Self { values, vectors })
    }

    /// `exp(-i H t) |psi>`.
    pub fn evolve(&self, t: f64, psi: &StateVector) -> Result<StateVector> {
        if psi.dim() != self.values.len() {
            return Err(EoiError::DimensionMismatch {
                expected: self.values.len(),
                found: psi.dim(),
            });
        }
        if t == 0.0 {
            return Ok(psi.clone());
        }
        let mut coeffs = self.vectors.ad_mul(psi.components());
        for (c, &e) in coeffs.iter_mut().zip(self.values.iter()) {
            *c *= C64::from_polar(1.0, -e * t);
        }
        Ok(StateVector(&self.vectors * coeffs))
    }

    /// `exp(-i H t)` as a matrix.
    pub fn propagator(&self, t: f64) -> UnitaryMatrix {
        let phases = DVector::from_iterator(
            self.values.len(),
            self.values.iter().map(|&e| C64::from_polar(1.0, -e * t)),
        );
        let scaled = DMatrix::from_fn(self.vectors.nrows(), self.vectors.ncols(), |i, k| {
            self.vectors[(i, k)] * phases[k]
        });
        UnitaryMatrix(scaled * self.vectors.adjoint())
    }
}

/// `exp(-i H t) |psi>` via the eigendecomposition of `H` (hbar = 1).
pub fn hermitian_expm_apply(h: &DMatrix<C64>, t: f64, psi: &StateVector) -> Result<StateVector> {
    if h.nrows() != psi.dim() {
        return Err(EoiError::DimensionMismatch {
            expected: h.nrows(),
            found: psi.dim(),
        });
    }
    HermitianEigen::new(h)?.evolve(t, psi)
}

fn check_orthonormal(columns: &[StateVector]) -> Result<()> {
    let mut worst = 0.0f64;
    for (i, a) in columns.iter().enumerate() {
        for (j, b) in columns.iter().enumerate().take(i + 1) {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((a.0.dotc(&b.0) - C64::new(target, 0.0)).norm());
        }
    }
    if worst > tol::ORTHONORMAL {
        return Err(EoiError::NotOrthonormal { residual: worst });
    }
    Ok(())
}

/// Extends `k` orthonormal columns to an `n x n` unitary.
///
/// The fill takes standard basis vectors in index order and skips any whose
/// residual after projection is below `tol::RANK`.
pub fn complete_unitary(columns: &[StateVector], n: usize) -> Result<UnitaryMatrix> {
    if columns.len() > n {
        return Err(EoiError::TooManyColumns {
            count: columns.len(),
            dimension: n,
        });
    }
    for c in columns {
        if c.dim() != n {
            return Err(EoiError::DimensionMismatch {
                expected: n,
                found: c.dim(),
            });
        }
    }
    check_orthonormal(columns)?;

    let mut basis: Vec<DVector<C64>> = columns.iter().map(|c| c.0.clone()).collect();
    for k in 0..n {
        if basis.len() == n {
            break;
        }
        let mut v = DVector::<C64>::zeros(n);
        v[k] = C64::new(1.0, 0.0);
        // two projection passes keep the fill orthogonal to machine precision
        for _ in 0..2 {
            for q in &basis {
                let r = q.dotc(&v);
                v.axpy(-r, q, C64::new(1.0, 0.0));
            }
        }
        let norm = v.norm();
        if norm < tol::RANK {
            continue;
        }
        basis.push(v.unscale(norm));
    }
    debug_assert_eq!(basis.len(), n);
    Ok(UnitaryMatrix(DMatrix::from_columns(&basis)))
}

/// Phase convention for the columns produced by Gram-Schmidt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseConvention {
    /// Leading nonzero entry of each `Q` column is real and positive.
    LeadingEntryPositive,
    /// Diagonal of `R` is real and positive (the textbook QR convention).
    PositivePivot,
}

/// Output of a pivoted Gram-Schmidt pass over a list of vectors.
#[derive(Debug, Clone)]
pub struct PivotedBasis {
    /// Orthonormal columns, one per kept input.
    pub columns: Vec<DVector<C64>>,
    /// Indices of the inputs that contributed a new direction.
    pub kept: Vec<usize>,
    /// Norm of each input's residual after projecting out the previous
    /// columns.
    pub pivots: Vec<f64>,
}

const LEADING_ENTRY_FLOOR: f64 = 1e-10;

fn fix_phase(q: &mut DVector<C64>) -> C64 {
    let lead = q.iter().copied().find(|z| z.norm() > LEADING_ENTRY_FLOOR);
    match lead {
        Some(z) => {
            let phase = z / z.norm();
            *q = q.map(|x| x * phase.conj());
            phase
        }
        None => C64::new(1.0, 0.0),
    }
}

/// Gram-Schmidt over `vectors`, skipping inputs whose residual falls below
/// `rank_tol`. Uses modified Gram-Schmidt with one reorthogonalization pass.
pub fn pivoted_gram_schmidt(
    vectors: &[DVector<C64>],
    rank_tol: f64,
    convention: PhaseConvention,
) -> PivotedBasis {
    let mut columns: Vec<DVector<C64>> = Vec::new();
    let mut kept = Vec::new();
    let mut pivots = Vec::new();
    for (idx, v) in vectors.iter().enumerate() {
        let mut w = v.clone();
        for _ in 0..2 {
            for q in &columns {
                let r = q.dotc(&w);
                w.axpy(-r, q, C64::new(1.0, 0.0));
            }
        }
        let norm = w.norm();
        pivots.push(norm);
        if norm < rank_tol {
            continue;
        }
        let mut q = w.unscale(norm);
        if convention == PhaseConvention::LeadingEntryPositive {
            fix_phase(&mut q);
        }
        columns.push(q);
        kept.push(idx);
    }
    PivotedBasis {
        columns,
        kept,
        pivots,
    }
}

/// Modified Gram-Schmidt: returns `Q` and upper-triangular `R` with
/// `states = Q R`. Each `Q` column has its leading nonzero entry made real and
/// positive.
pub fn orthonormalize(states: &[StateVector]) -> Result<(Vec<StateVector>, DMatrix<C64>)> {
    let first = states.first().ok_or(EoiError::Empty("state list"))?;
    for s in states {
        check_same_dim(first, s)?;
    }
    let m = states.len();
    let vectors: Vec<DVector<C64>> = states.iter().map(|s| s.0.clone()).collect();
    let basis = pivoted_gram_schmidt(&vectors, tol::RANK, PhaseConvention::LeadingEntryPositive);
    if basis.kept.len() < m {
        let index = (0..m).find(|i| !basis.kept.contains(i)).unwrap_or(0);
        return Err(EoiError::RankDeficient {
            index,
            pivot: basis.pivots[index],
        });
    }
    let mut r = DMatrix::<C64>::zeros(m, m);
    for (i, q) in basis.columns.iter().enumerate() {
        for (j, v) in vectors.iter().enumerate().skip(i) {
            r[(i, j)] = q.dotc(v);
        }
    }
    let q = basis.columns.into_iter().map(StateVector).collect();
    Ok((q, r))
}
