//! Closed-form solution for two targets (the quantum brachistochrone).
//!
//! With `Delta = <psi_1|psi_2>` and evolution time `t`, the optimal
//! Hamiltonian lives on the plane spanned by the two states, has spectrum
//! `{+eps, -eps, 0, ...}` with `eps t = arccos |Delta|`, equal weights
//! `Lambda = 1/2` on the two active eigenvectors, and energy
//! `tr(H^2) = 2 eps^2`. Writing `psi_2'` for the unit vector orthogonal to
//! `psi_1` in that plane (after rotating the phase of `psi_2` so that the
//! overlap is real),
//!
//! ```text
//! H = i eps (|psi_2'><psi_1| - |psi_1><psi_2'|)
//! psi(tau) = cos(eps tau) psi_1 + sin(eps tau) psi_2'
//! ```

use nalgebra::DVector;

use crate::error::{EoiError, Result};
use crate::kkt::{fit_multipliers, KktPoint, Multipliers};
use crate::problem::{ProblemSpec, SolutionCandidate};
use crate::quantum::{complete_unitary, inner_product, StateVector, UnitaryMatrix, C64};
use crate::reconstruct::{build_frame, HamiltonianResult};

/// Below this norm the component of `psi_2` orthogonal to `psi_1` is treated
/// as zero and the states as equal up to phase.
const DEGENERATE_RESIDUAL: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct QbpSolution {
    /// `eps = arccos|Delta| / t`.
    pub epsilon: f64,
    /// Weight on each of the two active eigenvectors, always `1/2`.
    pub lambda: f64,
    /// `arg <psi_1|psi_2>`; `e^{-i theta} <psi_1|psi_2>` is real non-negative.
    pub theta: f64,
    /// `tr(H^2) = 2 eps^2`.
    pub objective: f64,
    /// `omega` with `tr(H^2)/2 = omega^2`; equal to `epsilon`.
    pub omega: f64,
    /// Evolution time.
    pub time: f64,
    /// `|<psi_1|psi_2>|`.
    pub overlap: f64,
    pub hamiltonian: HamiltonianResult,
    pub psi1: StateVector,
    /// Unit vector orthogonal to `psi_1` spanning the geodesic plane.
    pub psi2_perp: StateVector,
}

impl QbpSolution {
    pub fn dimension(&self) -> usize {
        self.psi1.dim()
    }

    pub fn is_degenerate(&self) -> bool {
        self.epsilon == 0.0
    }

    /// The solution as a candidate: `eps = (eps, -eps, 0, ...)`,
    /// `Lambda = (1/2, 1/2, 0, ...)`, `theta = (0, -theta)`.
    ///
    /// The candidate phase is `-theta` because the constraints phase the
    /// target itself: `exp(-iHt) psi_1 = e^{i theta_2} psi_2`.
    pub fn candidate(&self) -> SolutionCandidate {
        let n = self.dimension();
        let mut eigenvalues = vec![0.0; n];
        let mut weights = vec![0.0; n];
        eigenvalues[0] = self.epsilon;
        eigenvalues[1] = -self.epsilon;
        if self.is_degenerate() {
            weights[0] = 1.0;
        } else {
            weights[0] = 0.5;
            weights[1] = 0.5;
        }
        SolutionCandidate::new(eigenvalues, weights, vec![0.0, -self.theta])
    }
}

/// Analytic energy-optimal solution for `psi1 -> psi2` in time `t`.
///
/// States equal up to a global phase give the degenerate solution `eps = 0`,
/// `H = 0`.
pub fn solve_qbp(psi1: &StateVector, psi2: &StateVector, t: f64) -> Result<QbpSolution> {
    let n = psi1.dim();
    if psi2.dim() != n {
        return Err(EoiError::DimensionMismatch {
            expected: n,
            found: psi2.dim(),
        });
    }
    if n < 2 {
        return Err(EoiError::InvalidProblem(
            "two-state evolution needs dimension at least 2".into(),
        ));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(EoiError::InvalidProblem(format!(
            "evolution time must be positive, got {t}"
        )));
    }
    let delta = inner_product(psi1, psi2)?;
    let overlap = delta.norm().min(1.0);
    let theta = if overlap > 0.0 { delta.arg() } else { 0.0 };

    // e^{-i theta} psi_2 = |Delta| psi_1 + sqrt(1 - |Delta|^2) psi_2'
    let rotated = psi2.with_phase(-theta);
    let mut perp: DVector<C64> = rotated.components() - psi1.components().scale(overlap);
    let r = psi1.components().dotc(&perp);
    perp.axpy(-r, psi1.components(), C64::new(1.0, 0.0));
    let perp_norm = perp.norm();

    let (epsilon, psi2_perp) = if perp_norm <= DEGENERATE_RESIDUAL {
        let u = complete_unitary(std::slice::from_ref(psi1), n)?;
        (0.0, StateVector::from_raw(u.matrix().column(1).into_owned()))
    } else {
        let angle = overlap.acos();
        (angle / t, StateVector::from_raw(perp.unscale(perp_norm)))
    };

    let hamiltonian = two_level_hamiltonian(psi1, &psi2_perp, epsilon, t)?;
    Ok(QbpSolution {
        epsilon,
        lambda: 0.5,
        theta,
        objective: 2.0 * epsilon * epsilon,
        omega: epsilon,
        time: t,
        overlap,
        hamiltonian,
        psi1: psi1.clone(),
        psi2_perp,
    })
}

/// `H = i eps (|perp><psi1| - |psi1><perp|)` with its eigenbasis
/// `(psi1 +- i perp)/sqrt 2` completed to a full unitary.
fn two_level_hamiltonian(
    psi1: &StateVector,
    perp: &StateVector,
    epsilon: f64,
    t: f64,
) -> Result<HamiltonianResult> {
    let n = psi1.dim();
    let a = psi1.components();
    let b = perp.components();
    let i_eps = C64::new(0.0, epsilon);
    let matrix = (b * a.adjoint() - a * b.adjoint()).map(|z| z * i_eps);

    let s = std::f64::consts::FRAC_1_SQRT_2;
    let plus = (a + b.map(|z| z * C64::new(0.0, 1.0))).scale(s);
    let minus = (a - b.map(|z| z * C64::new(0.0, 1.0))).scale(s);
    let eigvecs = complete_unitary(
        &[StateVector::from_raw(plus), StateVector::from_raw(minus)],
        n,
    )?;
    let transform = eigvecs.adjoint();

    let mut spectrum = vec![0.0; n];
    spectrum[0] = epsilon;
    spectrum[1] = -epsilon;
    let weights: Vec<f64> = (0..n).map(|k| if k < 2 { 0.5 } else { 0.0 }).collect();
    let cand = SolutionCandidate::new(spectrum.clone(), weights, vec![0.0, 0.0]);
    let frame = build_frame(&cand, &[0.0, t]);
    Ok(HamiltonianResult {
        matrix,
        transform: UnitaryMatrix::new(transform.matrix().clone())?,
        spectrum,
        frame,
    })
}

/// The geodesic `cos(eps tau) psi_1 + sin(eps tau) psi_2'`.
pub fn qbp_trajectory(sol: &QbpSolution, tau: f64) -> StateVector {
    let (s, c) = (sol.epsilon * tau).sin_cos();
    StateVector::from_raw(
        sol.psi1.components().scale(c) + sol.psi2_perp.components().scale(s),
    )
}

/// Residual `|Delta|^2 - [1 - 4 Lambda (1 - Lambda) sin^2(eps t)]` of the
/// modulus relation for `Lambda e^{i eps t} + (1 - Lambda) e^{-i eps t}`.
pub fn modulus_relation_check(lambda: f64, eps_t: f64, delta_abs: f64) -> f64 {
    let s = eps_t.sin();
    delta_abs * delta_abs - (1.0 - 4.0 * lambda * (1.0 - lambda) * s * s)
}

/// Smallest `eps t` in `[0, pi/2]` compatible with weight `lambda` and overlap
/// `delta_abs`, or `None` when no real solution exists.
pub fn required_phase(lambda: f64, delta_abs: f64) -> Option<f64> {
    let denom = 4.0 * lambda * (1.0 - lambda);
    if denom <= 0.0 {
        return (delta_abs >= 1.0).then_some(0.0);
    }
    let arg = (1.0 - delta_abs * delta_abs) / denom;
    (arg <= 1.0).then(|| arg.max(0.0).sqrt().asin())
}

/// Multipliers that make the analytic solution a stationary point of the
/// Lagrangian of `spec`.
///
/// Solves the two `eps`-stationarity rows of the active eigenvalues for
/// `(alpha, beta)` and recovers `gamma` from the weight stationarity. When the
/// 2x2 system is singular (orthogonal targets) the multipliers are fitted by
/// least squares over the full stationarity system.
pub fn qbp_kkt_multipliers(sol: &QbpSolution, spec: &ProblemSpec) -> Result<Multipliers> {
    if spec.num_targets() != 2 || spec.dimension() != sol.dimension() {
        return Err(EoiError::InvalidProblem(
            "multipliers need the matching two-target problem".into(),
        ));
    }
    if sol.epsilon <= 0.0 {
        return Err(EoiError::Singular(
            "zero-energy solution has undetermined multipliers".into(),
        ));
    }
    let cand = sol.candidate();
    let t = spec.times()[1];
    let theta2 = cand.phases[1];
    let eps = sol.epsilon;
    // rows: 2 eps_k = Lambda_k t [alpha sin(phi_k) - beta cos(phi_k)]
    let phi1 = eps * t + theta2;
    let phi2 = -eps * t + theta2;
    let lt = sol.lambda * t;
    let m = [
        [lt * phi1.sin(), -lt * phi1.cos()],
        [lt * phi2.sin(), -lt * phi2.cos()],
    ];
    let rhs = [2.0 * eps, -2.0 * eps];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let mult = if det.abs() > 1e-8 * lt * lt {
        let alpha = (rhs[0] * m[1][1] - m[0][1] * rhs[1]) / det;
        let beta = (m[0][0] * rhs[1] - rhs[0] * m[1][0]) / det;
        let gamma = -(alpha * phi1.cos() + beta * phi1.sin());
        Multipliers {
            alpha: vec![alpha],
            beta: vec![beta],
            gamma,
        }
    } else {
        fit_multipliers(spec, &cand)?.multipliers
    };
    Ok(mult)
}

/// Convenience: the analytic solution and its multipliers as a KKT point.
pub fn qbp_kkt_point(sol: &QbpSolution, spec: &ProblemSpec) -> Result<KktPoint> {
    Ok(KktPoint {
        candidate: sol.candidate(),
        multipliers: qbp_kkt_multipliers(sol, spec)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kkt::kkt_residual_norm;
    use crate::problem::constraint_residuals;
    use crate::quantum::{hermitian_expm_apply, phase_invariant_fidelity, HermitianEigen};
    use crate::reconstruct::verify;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn random_state(rng: &mut ChaCha8Rng, n: usize) -> StateVector {
        let v = DVector::from_fn(n, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        StateVector::normalized(v).unwrap()
    }

    #[test]
    fn orthogonal_pair() {
        let sol = solve_qbp(&StateVector::basis(3, 0), &StateVector::basis(3, 1), 1.0).unwrap();
        assert!((sol.epsilon - PI / 2.0).abs() < 1e-15);
        assert!((sol.objective - PI * PI / 2.0).abs() < 1e-14);
        assert_eq!(sol.omega, sol.epsilon);
    }

    #[test]
    fn proportional_pair_is_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let a = random_state(&mut rng, 3);
        let sol = solve_qbp(&a, &a.with_phase(0.9), 2.0).unwrap();
        assert_eq!(sol.epsilon, 0.0);
        assert!(sol.hamiltonian.matrix.camax() == 0.0);
        assert!(inner_product(&sol.psi1, &sol.psi2_perp).unwrap().norm() < 1e-12);
    }

    #[test]
    fn half_overlap_pair_uses_evolution_oracle() {
        let psi1 = StateVector::basis(2, 0);
        let psi2 = StateVector::from_slice(&[C64::new(FRAC_1_SQRT_2, 0.0), C64::new(FRAC_1_SQRT_2, 0.0)]).unwrap();
        let sol = solve_qbp(&psi1, &psi2, 2.0).unwrap();
        assert!((sol.epsilon - PI / 8.0).abs() < 1e-15);
        let out = hermitian_expm_apply(&sol.hamiltonian.matrix, 2.0, &psi1).unwrap();
        assert!((phase_invariant_fidelity(&out, &psi2).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_inputs() {
        let a = StateVector::basis(2, 0);
        assert!(solve_qbp(&a, &StateVector::basis(2, 1), 0.0).is_err());
        assert!(solve_qbp(&a, &StateVector::basis(3, 1), 1.0).is_err());
        assert!(solve_qbp(&StateVector::basis(1, 0), &StateVector::basis(1, 0), 1.0).is_err());
    }

    #[test]
    fn hamiltonian_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let n = rng.random_range(2..7);
            let t = rng.random_range(0.1..10.0);
            let psi1 = random_state(&mut rng, n);
            let psi2 = random_state(&mut rng, n);
            let sol = solve_qbp(&psi1, &psi2, t).unwrap();
            let h = &sol.hamiltonian.matrix;
            let eig = HermitianEigen::new(h).unwrap();
            let mut want = vec![0.0; n];
            want[0] = -sol.epsilon;
            want[n - 1] = sol.epsilon;
            want.sort_by(f64::total_cmp);
            for (got, want) in eig.values.iter().zip(&want) {
                assert!((got - want).abs() < 1e-11);
            }
            assert!(h.trace().norm() < 1e-12);
            let tr2 = (h * h).trace();
            assert!((tr2.re - 2.0 * sol.epsilon * sol.epsilon).abs() < 1e-11);
            assert!(inner_product(&sol.psi1, &sol.psi2_perp).unwrap().norm() < 1e-12);
            assert!((sol.psi2_perp.norm() - 1.0).abs() < 1e-12);
            let rotated = inner_product(&psi1, &psi2).unwrap() * C64::from_polar(1.0, -sol.theta);
            assert!(rotated.im.abs() < 1e-14 && rotated.re >= 0.0);
            // T H T^dagger = diag(spectrum)
            let tm = sol.hamiltonian.transform.matrix();
            let d = tm * h * tm.adjoint();
            for i in 0..n {
                for j in 0..n {
                    let w = if i == j { sol.hamiltonian.spectrum[i] } else { 0.0 };
                    assert!((d[(i, j)] - C64::new(w, 0.0)).norm() < 1e-10);
                }
            }
            let spec = ProblemSpec::new(vec![psi1, psi2], vec![0.0, t]).unwrap();
            let report = verify(&spec, &sol.hamiltonian).unwrap();
            assert!(report.passed);
            assert!(report.min_fidelity() > 1.0 - 1e-12);
            for r in constraint_residuals(&spec, &sol.candidate()).unwrap() {
                assert!(r.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn trajectory_endpoints_and_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let psi1 = random_state(&mut rng, 4);
        let psi2 = random_state(&mut rng, 4);
        let t = 1.7;
        let sol = solve_qbp(&psi1, &psi2, t).unwrap();
        assert_eq!(qbp_trajectory(&sol, 0.0), psi1);
        let end = qbp_trajectory(&sol, t);
        assert!((phase_invariant_fidelity(&end, &psi2).unwrap() - 1.0).abs() < 1e-12);
        for tau in [0.3, 1.0, 2.5, 6.0] {
            let geo = qbp_trajectory(&sol, tau);
            assert!((geo.norm() - 1.0).abs() < 1e-12);
            let evolved = hermitian_expm_apply(&sol.hamiltonian.matrix, tau, &psi1).unwrap();
            assert!((phase_invariant_fidelity(&geo, &evolved).unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn modulus_relation_examples() {
        for d in [0.0, 0.3, 0.7, 1.0] {
            assert!(modulus_relation_check(0.5, f64::acos(d), d).abs() < 1e-14);
        }
        for d in [0.2, 0.9, 1.0] {
            assert!((modulus_relation_check(1.0, 0.8, d) - (d * d - 1.0)).abs() < 1e-15);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..100 {
            let lam = rng.random_range(0.0..1.0);
            let et = rng.random_range(-4.0..4.0);
            let d = rng.random_range(0.0..1.0);
            let z = C64::from_polar(lam, et) + C64::from_polar(1.0 - lam, -et);
            let oracle = d * d - z.norm_sqr();
            assert!((modulus_relation_check(lam, et, d) - oracle).abs() < 1e-14);
        }
    }

    #[test]
    fn equal_weights_minimize_required_energy() {
        for d in [0.0, 0.25, 0.5, 0.75] {
            let best = required_phase(0.5, d).unwrap();
            assert!((best - f64::acos(d)).abs() < 1e-12);
            for k in 1..100 {
                let lam = k as f64 / 100.0;
                if let Some(p) = required_phase(lam, d) {
                    assert!(p >= best - 1e-15);
                    if k != 50 {
                        assert!(p > best);
                    }
                }
            }
        }
    }

    #[test]
    fn multipliers_make_solution_stationary() {
        let spec = ProblemSpec::new(vec![StateVector::basis(3, 0), StateVector::basis(3, 1)], vec![0.0, 1.0]).unwrap();
        let sol = solve_qbp(&spec.states()[0], &spec.states()[1], 1.0).unwrap();
        let point = qbp_kkt_point(&sol, &spec).unwrap();
        assert!(kkt_residual_norm(&spec, &point).unwrap() < 1e-9);

        let mut rng = ChaCha8Rng::seed_from_u64(45);
        for _ in 0..20 {
            let n = rng.random_range(2..6);
            let t = rng.random_range(0.2..5.0);
            let spec = ProblemSpec::new(vec![random_state(&mut rng, n), random_state(&mut rng, n)], vec![0.0, t]).unwrap();
            let sol = solve_qbp(&spec.states()[0], &spec.states()[1], t).unwrap();
            let point = qbp_kkt_point(&sol, &spec).unwrap();
            assert!(kkt_residual_norm(&spec, &point).unwrap() < 1e-9);
        }

        let a = StateVector::basis(2, 0);
        let spec = ProblemSpec::new(vec![a.clone(), a.with_phase(0.3)], vec![0.0, 1.0]).unwrap();
        let sol = solve_qbp(&a, &a.with_phase(0.3), 1.0).unwrap();
        assert!(matches!(qbp_kkt_multipliers(&sol, &spec), Err(EoiError::Singular(_))));
    }
}
