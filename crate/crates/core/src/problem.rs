//! Interpolation problem instances and the residuals of the interpolation
//! constraints.
//!
//! A candidate solution is described in the eigenbasis of the Hamiltonian by
//! its spectrum `eps_k`, the weights `Lambda_k = |lambda_k|^2` of the initial
//! state on each eigenvector, and one phase `theta_i` per target. The
//! constraints require, for every pair `j < i`,
//!
//! ```text
//! sum_k Lambda_k exp(i [eps_k (t_i - t_j) + theta_i - theta_j]) = <psi_i|psi_j>
//! ```
//!
//! together with `sum_k Lambda_k = 1`.

use nalgebra::DVector;

use crate::error::{EoiError, Result};
use crate::quantum::{gram_matrix, GramData, StateVector, UnitaryMatrix, C64};
use crate::tol;

/// One ordered target pair `(i, j)` with `j < i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
    /// `t_i - t_j`.
    pub dt: f64,
    /// `Delta_ij = <psi_i|psi_j>`.
    pub delta: C64,
}

/// Pairs `(i, j)`, `j < i`, in row-major order: `(1,0), (2,0), (2,1), ...`.
pub fn pair_indices(m: usize) -> Vec<(usize, usize)> {
    (1..m).flat_map(|i| (0..i).map(move |j| (i, j))).collect()
}

/// A validated interpolation instance.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    dimension: usize,
    states: Vec<StateVector>,
    times: Vec<f64>,
    gram: GramData,
    pairs: Vec<Pair>,
}

impl ProblemSpec {
    /// Validates targets and timestamps.
    ///
    /// Requires `m >= 2` states of one dimension, all normalized, with
    /// `t_1 = 0` and strictly increasing times. Orthogonal targets need
    /// `m <= n`.
    pub fn new(states: Vec<StateVector>, times: Vec<f64>) -> Result<Self> {
        let m = states.len();
        if m < 2 {
            return Err(EoiError::InvalidProblem(format!(
                "need at least two target states, got {m}"
            )));
        }
        if times.len() != m {
            return Err(EoiError::InvalidProblem(format!(
                "{m} states but {} times",
                times.len()
            )));
        }
        let dimension = states[0].dim();
        for s in &states {
            if s.dim() != dimension {
                return Err(EoiError::DimensionMismatch {
                    expected: dimension,
                    found: s.dim(),
                });
            }
        }
        for (index, s) in states.iter().enumerate() {
            let deviation = s.components().norm_squared() - 1.0;
            if deviation.abs() > tol::NORM {
                return Err(EoiError::NotNormalized { index, deviation });
            }
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(EoiError::InvalidProblem("times must be finite".into()));
        }
        if times[0] != 0.0 {
            return Err(EoiError::InvalidProblem(format!(
                "the first time must be 0, got {}",
                times[0]
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(EoiError::InvalidProblem(
                "times must be strictly increasing".into(),
            ));
        }
        let gram = gram_matrix(&states)?;
        check_orthogonal_count(&gram, dimension)?;
        let pairs = pair_indices(m)
            .into_iter()
            .map(|(i, j)| Pair {
                i,
                j,
                dt: times[i] - times[j],
                delta: gram.get(i, j),
            })
            .collect();
        Ok(Self {
            dimension,
            states,
            times,
            gram,
            pairs,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn num_targets(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn gram(&self) -> &GramData {
        &self.gram
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    /// Pairs whose targets agree up to a global phase (`|Delta_ij| = 1`).
    pub fn proportional_pairs(&self, tolerance: f64) -> Vec<(usize, usize)> {
        self.pairs
            .iter()
            .filter(|p| 1.0 - p.delta.norm() <= tolerance)
            .map(|p| (p.i, p.j))
            .collect()
    }

    /// True when the Gram matrix is the identity within `tolerance`.
    pub fn has_orthogonal_targets(&self, tolerance: f64) -> bool {
        self.gram.is_identity(tolerance)
    }

    /// Common spacing when `t_i = (i - 1) t` within `tolerance` (relative to
    /// the final time).
    pub fn even_spacing(&self, tolerance: f64) -> Option<f64> {
        let step = self.times[1];
        let scale = self.times[self.times.len() - 1];
        self.times
            .iter()
            .enumerate()
            .all(|(i, &t)| (t - i as f64 * step).abs() <= tolerance * scale)
            .then_some(step)
    }
}

fn check_orthogonal_count(gram: &GramData, dimension: usize) -> Result<()> {
    if gram.size() > dimension && gram.is_identity(tol::ORTHONORMAL) {
        return Err(EoiError::InvalidProblem(format!(
            "{} mutually orthogonal targets cannot fit in dimension {dimension}: \
             orthogonal targets are linearly independent, so m <= n",
            gram.size()
        )));
    }
    Ok(())
}

/// A point `(eps, Lambda, theta)` in the search space.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionCandidate {
    /// Energies `eps_1..eps_n`.
    pub eigenvalues: Vec<f64>,
    /// `Lambda_k = |lambda_k|^2`.
    pub weights: Vec<f64>,
    /// `theta_1..theta_m`, with `theta_1 = 0`.
    pub phases: Vec<f64>,
}

impl SolutionCandidate {
    pub fn new(eigenvalues: Vec<f64>, weights: Vec<f64>, phases: Vec<f64>) -> Self {
        Self {
            eigenvalues,
            weights,
            phases,
        }
    }

    pub fn dimension(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    pub fn is_trace_zero(&self) -> bool {
        self.trace().abs() <= tol::GAUGE
    }

    /// Checks that the lengths match `spec`.
    pub fn validate_dims(&self, spec: &ProblemSpec) -> Result<()> {
        check_dims(spec, self)
    }

    /// Checks the lengths against `spec` and the weight and phase gauges.
    pub fn validate(&self, spec: &ProblemSpec) -> Result<()> {
        check_dims(spec, self)?;
        if let Some(w) = self.weights.iter().find(|w| **w < 0.0 || !w.is_finite()) {
            return Err(EoiError::InvalidCandidate(format!("negative weight {w}")));
        }
        let deviation = normalization_residual(self);
        if deviation.abs() > tol::NORM {
            return Err(EoiError::InvalidCandidate(format!(
                "weights sum to 1 + {deviation:.3e}"
            )));
        }
        if self.phases[0] != 0.0 {
            return Err(EoiError::InvalidCandidate(format!(
                "theta_1 must be 0, got {}",
                self.phases[0]
            )));
        }
        Ok(())
    }
}

fn check_dims(spec: &ProblemSpec, cand: &SolutionCandidate) -> Result<()> {
    let n = spec.dimension();
    for len in [cand.eigenvalues.len(), cand.weights.len()] {
        if len != n {
            return Err(EoiError::DimensionMismatch {
                expected: n,
                found: len,
            });
        }
    }
    if cand.phases.len() != spec.num_targets() {
        return Err(EoiError::DimensionMismatch {
            expected: spec.num_targets(),
            found: cand.phases.len(),
        });
    }
    Ok(())
}

/// `sum_k Lambda_k exp(i phi_k)` for every pair, without subtracting
/// `Delta_ij`.
pub(crate) fn pair_sums(spec: &ProblemSpec, cand: &SolutionCandidate) -> Vec<C64> {
    spec.pairs()
        .iter()
        .map(|p| {
            let shift = cand.phases[p.i] - cand.phases[p.j];
            cand.eigenvalues
                .iter()
                .zip(&cand.weights)
                .map(|(&e, &w)| C64::from_polar(w, e * p.dt + shift))
                .sum()
        })
        .collect()
}

/// Real and imaginary residuals of the interpolation constraints, pair by
/// pair in row-major order, real part first.
pub fn constraint_residuals(spec: &ProblemSpec, cand: &SolutionCandidate) -> Result<Vec<f64>> {
    check_dims(spec, cand)?;
    Ok(pair_sums(spec, cand)
        .into_iter()
        .zip(spec.pairs())
        .flat_map(|(z, p)| {
            let r = z - p.delta;
            [r.re, r.im]
        })
        .collect())
}

/// Euclidean norm of [`constraint_residuals`].
pub fn constraint_residual_norm(spec: &ProblemSpec, cand: &SolutionCandidate) -> Result<f64> {
    Ok(constraint_residuals(spec, cand)?
        .iter()
        .map(|r| r * r)
        .sum::<f64>()
        .sqrt())
}

/// `sum_k Lambda_k - 1`.
pub fn normalization_residual(cand: &SolutionCandidate) -> f64 {
    cand.weights.iter().sum::<f64>() - 1.0
}

/// Shifts the zero point of energy by `delta`, compensating with the phases
/// `theta_i -> theta_i - delta t_i` so that the constraints are unchanged.
pub fn apply_energy_shift(
    cand: &SolutionCandidate,
    delta: f64,
    spec: &ProblemSpec,
) -> SolutionCandidate {
    SolutionCandidate {
        eigenvalues: cand.eigenvalues.iter().map(|e| e + delta).collect(),
        weights: cand.weights.clone(),
        phases: cand
            .phases
            .iter()
            .zip(spec.times())
            .map(|(th, t)| th - delta * t)
            .collect(),
    }
}

/// Shift that moves `cand` into the trace-zero gauge.
pub fn trace_zero_shift(cand: &SolutionCandidate) -> f64 {
    -cand.trace() / cand.dimension() as f64
}

/// Replaces every target by `U |psi_i>`.
pub fn apply_unitary_to_spec(spec: &ProblemSpec, u: &UnitaryMatrix) -> Result<ProblemSpec> {
    if u.dim() != spec.dimension() {
        return Err(EoiError::DimensionMismatch {
            expected: spec.dimension(),
            found: u.dim(),
        });
    }
    let states = spec
        .states()
        .iter()
        .map(|s| {
            let v: DVector<C64> = u.matrix() * s.components();
            StateVector::normalized(v)
        })
        .collect::<Result<Vec<_>>>()?;
    ProblemSpec::new(states, spec.times().to_vec())
}

/// How the constraint count compares with the number of unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Under,
    Square,
    Over,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Under => "UNDER",
            Regime::Square => "SQUARE",
            Regime::Over => "OVER",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountingReport {
    /// `m (m - 1)` real constraint equations.
    pub num_constraint_equations: usize,
    /// `2 n + m` unknowns `(eps_k, |lambda_k|, theta_i)`.
    pub num_unknowns: usize,
    pub regime: Regime,
    /// Size of the full stationarity system, `m^2 + 2 n + 1`.
    pub kkt_equations: usize,
    pub kkt_unknowns: usize,
}

/// Counts equations and unknowns of `spec`.
pub fn counting_report(spec: &ProblemSpec) -> CountingReport {
    counting_for(spec.dimension(), spec.num_targets())
}

/// Same as [`counting_report`] from raw sizes.
pub fn counting_for(n: usize, m: usize) -> CountingReport {
    let equations = m * (m - 1);
    let unknowns = 2 * n + m;
    let regime = match equations.cmp(&unknowns) {
        std::cmp::Ordering::Less => Regime::Under,
        std::cmp::Ordering::Equal => Regime::Square,
        std::cmp::Ordering::Greater => Regime::Over,
    };
    let kkt = m * m + 2 * n + 1;
    CountingReport {
        num_constraint_equations: equations,
        num_unknowns: unknowns,
        regime,
        kkt_equations: kkt,
        kkt_unknowns: kkt,
    }
}
