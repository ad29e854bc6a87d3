//! Objective, Lagrangian and first-order stationarity conditions.
//!
//! With one multiplier pair `(alpha_ij, beta_ij)` per target pair and `gamma`
//! for the normalization, the Lagrangian is
//!
//! ```text
//! S = sum_k eps_k^2
//!   + sum_{j<i} alpha_ij (sum_k Lambda_k cos(phi_kij) - Re Delta_ij)
//!   + sum_{j<i} beta_ij  (sum_k Lambda_k sin(phi_kij) - Im Delta_ij)
//!   + gamma (sum_k Lambda_k - 1)
//! phi_kij = eps_k (t_i - t_j) + theta_i - theta_j
//! ```
//!
//! Stationarity is reported with respect to `eps_k`, `Lambda_k` and
//! `theta_i`, in that order.

use nalgebra::{DMatrix, DVector};

use crate::error::{EoiError, Result};
use crate::problem::{
    constraint_residuals, normalization_residual, ProblemSpec, SolutionCandidate,
};

/// Lagrange multipliers, `alpha` and `beta` in row-major pair order.
#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: f64,
}

/// Index of pair `(i, j)`, `j < i`, in row-major order.
pub fn pair_index(i: usize, j: usize) -> usize {
    debug_assert!(j < i);
    i * (i - 1) / 2 + j
}

impl Multipliers {
    pub fn zeros(m: usize) -> Self {
        let pairs = m * (m - 1) / 2;
        Self {
            alpha: vec![0.0; pairs],
            beta: vec![0.0; pairs],
            gamma: 0.0,
        }
    }

    pub fn num_pairs(&self) -> usize {
        self.alpha.len()
    }

    /// `alpha~_ij`: `alpha_ij` for `i > j`, `alpha_ji` for `i < j`.
    pub fn alpha_tilde(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i > j { (i, j) } else { (j, i) };
        self.alpha[pair_index(hi, lo)]
    }

    /// `beta~_ij`: `beta_ij` for `i > j`, `beta_ji` for `i < j`.
    pub fn beta_tilde(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i > j { (i, j) } else { (j, i) };
        self.beta[pair_index(hi, lo)]
    }
}

/// A candidate together with its multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct KktPoint {
    pub candidate: SolutionCandidate,
    pub multipliers: Multipliers,
}

/// `sum_k eps_k^2`, equal to `tr(H^2)` of the reconstructed Hamiltonian.
pub fn objective(cand: &SolutionCandidate) -> f64 {
    cand.eigenvalues.iter().map(|e| e * e).sum()
}

fn check_multipliers(spec: &ProblemSpec, mult: &Multipliers) -> Result<()> {
    let pairs = spec.pairs().len();
    for len in [mult.alpha.len(), mult.beta.len()] {
        if len != pairs {
            return Err(EoiError::DimensionMismatch {
                expected: pairs,
                found: len,
            });
        }
    }
    Ok(())
}

/// The Lagrangian `S` at `point`.
pub fn lagrangian(spec: &ProblemSpec, point: &KktPoint) -> Result<f64> {
    check_multipliers(spec, &point.multipliers)?;
    let residuals = constraint_residuals(spec, &point.candidate)?;
    let mult = &point.multipliers;
    let constraints: f64 = residuals
        .chunks_exact(2)
        .zip(mult.alpha.iter().zip(&mult.beta))
        .map(|(r, (a, b))| a * r[0] + b * r[1])
        .sum();
    Ok(objective(&point.candidate)
        + constraints
        + mult.gamma * normalization_residual(&point.candidate))
}

/// Partial derivatives of a Lagrangian-type function with respect to
/// `eps`, `Lambda` and `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub eigenvalues: Vec<f64>,
    pub weights: Vec<f64>,
    pub phases: Vec<f64>,
}

impl Gradient {
    pub fn into_vec(self) -> Vec<f64> {
        let mut v = self.eigenvalues;
        v.extend(self.weights);
        v.extend(self.phases);
        v
    }
}

/// Gradient of
/// `w sum eps^2 + sum_p (a_p Re C_p + b_p Im C_p) + gamma sum Lambda`.
///
/// `re_weights` and `im_weights` are indexed by pair.
pub(crate) fn weighted_gradient(
    spec: &ProblemSpec,
    cand: &SolutionCandidate,
    objective_weight: f64,
    re_weights: &[f64],
    im_weights: &[f64],
    gamma: f64,
) -> Gradient {
    let n = cand.eigenvalues.len();
    let mut g_eps: Vec<f64> = cand
        .eigenvalues
        .iter()
        .map(|e| 2.0 * objective_weight * e)
        .collect();
    let mut g_w = vec![gamma; n];
    let mut g_th = vec![0.0; cand.phases.len()];
    for (p, pair) in spec.pairs().iter().enumerate() {
        let (a, b) = (re_weights[p], im_weights[p]);
        if a == 0.0 && b == 0.0 {
            continue;
        }
        let shift = cand.phases[pair.i] - cand.phases[pair.j];
        let mut phase_acc = 0.0;
        for k in 0..n {
            let (s, c) = (cand.eigenvalues[k] * pair.dt + shift).sin_cos();
            // d/dphi of (a cos phi + b sin phi)
            let dphi = -a * s + b * c;
            let lam = cand.weights[k];
            g_eps[k] += lam * pair.dt * dphi;
            g_w[k] += a * c + b * s;
            phase_acc += lam * dphi;
        }
        g_th[pair.i] += phase_acc;
        g_th[pair.j] -= phase_acc;
    }
    Gradient {
        eigenvalues: g_eps,
        weights: g_w,
        phases: g_th,
    }
}

/// `dS/d eps_k` (n entries), `dS/d Lambda_k` (n entries), `dS/d theta_i`
/// (m entries).
///
/// The `eps` block is `2 eps_k - sum_{j<i} Lambda_k (t_i - t_j)
/// [alpha_ij sin(phi) - beta_ij cos(phi)]`. The `Lambda` block is
/// `gamma + sum_{j<i} [alpha_ij cos(phi) + beta_ij sin(phi)]`.
///
/// The `theta` block is
/// `sum_{j != i} sum_k Lambda_k [-alpha~_ij sin(phi_kij) + s_ij beta~_ij cos(phi_kij)]`
/// with `s_ij = +1` for `j < i` and `-1` for `j > i`: the imaginary part of
/// the pair sum is odd under `i <-> j`, so its multiplier enters with a sign
/// flip when it is reached from the lower index.
pub fn stationarity_residuals(spec: &ProblemSpec, point: &KktPoint) -> Result<Vec<f64>> {
    check_multipliers(spec, &point.multipliers)?;
    point.candidate.validate_dims(spec)?;
    let mult = &point.multipliers;
    Ok(weighted_gradient(
        spec,
        &point.candidate,
        1.0,
        &mult.alpha,
        &mult.beta,
        mult.gamma,
    )
    .into_vec())
}

/// Norm of the first-order optimality conditions with `Lambda_k >= 0`
/// treated as a complementarity condition.
///
/// The `Lambda` block contributes `min(Lambda_k, dS/d Lambda_k)`, which
/// vanishes iff either the weight is interior with zero derivative or it sits
/// on the boundary with non-negative derivative.
pub fn kkt_residual_norm(spec: &ProblemSpec, point: &KktPoint) -> Result<f64> {
    let n = spec.dimension();
    let r = stationarity_residuals(spec, point)?;
    let mut acc = 0.0;
    for (idx, v) in r.iter().enumerate() {
        let v = if (n..2 * n).contains(&idx) {
            point.candidate.weights[idx - n].min(*v)
        } else {
            *v
        };
        acc += v * v;
    }
    Ok(acc.sqrt())
}

/// Least-squares multiplier estimate at a fixed candidate.
#[derive(Debug, Clone)]
pub struct MultiplierFit {
    pub multipliers: Multipliers,
    /// [`kkt_residual_norm`] at the fitted multipliers.
    pub residual_norm: f64,
    /// Numerical rank of the linear system in `(alpha, beta, gamma)`.
    pub rank: usize,
}

/// Weights below this count as inactive when fitting multipliers.
pub const ACTIVE_WEIGHT: f64 = 1e-8;

/// Fits `(alpha, beta, gamma)` minimizing the stationarity residual at `cand`.
///
/// Stationarity is affine in the multipliers. Rows are the `eps` block, the
/// `theta` block and the `Lambda` rows of active weights; inactive weights are
/// left to the complementarity check in the returned residual.
pub fn fit_multipliers(spec: &ProblemSpec, cand: &SolutionCandidate) -> Result<MultiplierFit> {
    cand.validate_dims(spec)?;
    let n = spec.dimension();
    let m = spec.num_targets();
    let pairs = spec.pairs();
    let np = pairs.len();
    let active: Vec<usize> = (0..n).filter(|&k| cand.weights[k] > ACTIVE_WEIGHT).collect();
    let rows = n + m + active.len();
    let cols = 2 * np + 1;
    let mut a = DMatrix::<f64>::zeros(rows, cols);
    let mut rhs = DVector::<f64>::zeros(rows);
    for k in 0..n {
        rhs[k] = -2.0 * cand.eigenvalues[k];
    }
    for (p, pair) in pairs.iter().enumerate() {
        let shift = cand.phases[pair.i] - cand.phases[pair.j];
        for k in 0..n {
            let (s, c) = (cand.eigenvalues[k] * pair.dt + shift).sin_cos();
            let lam = cand.weights[k];
            a[(k, p)] += -lam * pair.dt * s;
            a[(k, np + p)] += lam * pair.dt * c;
            a[(n + pair.i, p)] += -lam * s;
            a[(n + pair.i, np + p)] += lam * c;
            a[(n + pair.j, p)] += lam * s;
            a[(n + pair.j, np + p)] -= lam * c;
        }
        for (row, &k) in active.iter().enumerate() {
            let (s, c) = (cand.eigenvalues[k] * pair.dt + shift).sin_cos();
            a[(n + m + row, p)] = c;
            a[(n + m + row, np + p)] = s;
        }
    }
    for row in 0..active.len() {
        a[(n + m + row, 2 * np)] = 1.0;
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = 1e-12 * smax.max(1e-300);
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    let x = svd
        .solve(&rhs, cutoff)
        .map_err(|e| EoiError::Singular(e.to_string()))?;
    let multipliers = Multipliers {
        alpha: x.rows(0, np).iter().copied().collect(),
        beta: x.rows(np, np).iter().copied().collect(),
        gamma: x[2 * np],
    };
    let point = KktPoint {
        candidate: cand.clone(),
        multipliers,
    };
    let residual_norm = kkt_residual_norm(spec, &point)?;
    Ok(MultiplierFit {
        multipliers: point.multipliers,
        residual_norm,
        rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{StateVector, C64};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_state(rng: &mut ChaCha8Rng, n: usize) -> StateVector {
        let v = DVector::from_fn(n, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        StateVector::normalized(v).unwrap()
    }

    fn random_spec(rng: &mut ChaCha8Rng, n: usize, m: usize) -> ProblemSpec {
        let states = (0..m).map(|_| random_state(rng, n)).collect();
        let mut t = 0.0;
        let times = (0..m)
            .map(|i| {
                if i > 0 {
                    t += rng.random_range(0.2..1.5);
                }
                t
            })
            .collect();
        ProblemSpec::new(states, times).unwrap()
    }

    fn random_point(rng: &mut ChaCha8Rng, n: usize, m: usize) -> KktPoint {
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut phases: Vec<f64> = (0..m).map(|_| rng.random_range(-PI..PI)).collect();
        phases[0] = 0.0;
        let pairs = m * (m - 1) / 2;
        KktPoint {
            candidate: SolutionCandidate::new(
                (0..n).map(|_| rng.random_range(-3.0..3.0)).collect(),
                raw.iter().map(|w| w / total).collect(),
                phases,
            ),
            multipliers: Multipliers {
                alpha: (0..pairs).map(|_| rng.random_range(-2.0..2.0)).collect(),
                beta: (0..pairs).map(|_| rng.random_range(-2.0..2.0)).collect(),
                gamma: rng.random_range(-2.0..2.0),
            },
        }
    }

    /// The Lagrangian written out term by term with explicit cos/sin sums.
    fn loop_lagrangian(spec: &ProblemSpec, point: &KktPoint) -> f64 {
        let c = &point.candidate;
        let mu = &point.multipliers;
        let n = spec.dimension();
        let m = spec.num_targets();
        let mut s: f64 = c.eigenvalues.iter().map(|e| e * e).sum();
        let mut idx = 0;
        for i in 0..m {
            for j in 0..i {
                let d = spec.gram().get(i, j);
                let mut cs = 0.0;
                let mut sn = 0.0;
                for k in 0..n {
                    let arg = c.eigenvalues[k] * (spec.times()[i] - spec.times()[j])
                        + c.phases[i]
                        - c.phases[j];
                    cs += c.weights[k] * arg.cos();
                    sn += c.weights[k] * arg.sin();
                }
                s += mu.alpha[idx] * (cs - d.re) + mu.beta[idx] * (sn - d.im);
                idx += 1;
            }
        }
        s + mu.gamma * (c.weights.iter().sum::<f64>() - 1.0)
    }

    fn coord(p: &mut KktPoint, n: usize, idx: usize) -> &mut f64 {
        if idx < n {
            &mut p.candidate.eigenvalues[idx]
        } else if idx < 2 * n {
            &mut p.candidate.weights[idx - n]
        } else {
            &mut p.candidate.phases[idx - 2 * n]
        }
    }

    fn fd_gradient(spec: &ProblemSpec, point: &KktPoint) -> Vec<f64> {
        let n = spec.dimension();
        let m = spec.num_targets();
        let mut out = Vec::new();
        for idx in 0..(2 * n + m) {
            let mut plus = point.clone();
            let x = *coord(&mut plus, n, idx);
            let h = f64::max(1e-6, 1e-6 * x.abs());
            *coord(&mut plus, n, idx) = x + h;
            let mut minus = point.clone();
            *coord(&mut minus, n, idx) = x - h;
            out.push((loop_lagrangian(spec, &plus) - loop_lagrangian(spec, &minus)) / (2.0 * h));
        }
        out
    }

    #[test]
    fn objective_examples() {
        let c = |e: Vec<f64>| SolutionCandidate::new(e.clone(), vec![0.0; e.len()], vec![0.0]);
        assert_eq!(objective(&c(vec![0.0; 4])), 0.0);
        assert!((objective(&c(vec![PI / 2.0, -PI / 2.0])) - PI * PI / 2.0).abs() < 1e-15);
        assert_eq!(objective(&c(vec![1.0, 2.0, -3.0])), 14.0);
    }

    #[test]
    fn lagrangian_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let spec = random_spec(&mut rng, 3, 3);
        let mut point = random_point(&mut rng, 3, 3);
        let zero = KktPoint {
            candidate: point.candidate.clone(),
            multipliers: Multipliers::zeros(3),
        };
        assert_eq!(lagrangian(&spec, &zero).unwrap(), objective(&point.candidate));
        for _ in 0..10 {
            point = random_point(&mut rng, 3, 3);
            let got = lagrangian(&spec, &point).unwrap();
            assert!((got - loop_lagrangian(&spec, &point)).abs() < 1e-13);
        }
    }

    #[test]
    fn lagrangian_equals_objective_when_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let psi = random_state(&mut rng, 3);
        let spec = ProblemSpec::new(vec![psi.clone(), psi.clone(), psi], vec![0.0, 1.0, 2.0]).unwrap();
        let mut point = random_point(&mut rng, 3, 3);
        point.candidate.eigenvalues = vec![0.0; 3];
        point.candidate.phases = vec![0.0; 3];
        let got = lagrangian(&spec, &point).unwrap();
        assert!((got - objective(&point.candidate)).abs() < 1e-15);
    }

    #[test]
    fn zero_multipliers_zero_energy_gives_zero_eps_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let spec = random_spec(&mut rng, 4, 3);
        let mut point = random_point(&mut rng, 4, 3);
        point.candidate.eigenvalues = vec![0.0; 4];
        point.multipliers = Multipliers::zeros(3);
        let r = stationarity_residuals(&spec, &point).unwrap();
        assert_eq!(r.len(), 4 + 4 + 3);
        assert!(r[..4].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn stationarity_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..20 {
            let n = rng.random_range(2..5);
            let m = rng.random_range(2..5);
            let spec = random_spec(&mut rng, n, m);
            let point = random_point(&mut rng, n, m);
            let analytic = stationarity_residuals(&spec, &point).unwrap();
            let fd = fd_gradient(&spec, &point);
            for (a, f) in analytic.iter().zip(&fd) {
                assert!((a - f).abs() <= 1e-6 * a.abs().max(f.abs()) + 1e-8, "{a} vs {f}");
            }
        }
    }

    #[test]
    fn theta_block_sums_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        for _ in 0..10 {
            let spec = random_spec(&mut rng, 3, 4);
            let point = random_point(&mut rng, 3, 4);
            let r = stationarity_residuals(&spec, &point).unwrap();
            let sum: f64 = r[6..].iter().sum();
            assert!(sum.abs() < 1e-10);
        }
    }

    #[test]
    fn tilde_extension_is_symmetric() {
        let mu = Multipliers {
            alpha: vec![1.0, 2.0, 3.0],
            beta: vec![4.0, 5.0, 6.0],
            gamma: 0.0,
        };
        assert_eq!(mu.alpha_tilde(2, 1), 3.0);
        assert_eq!(mu.alpha_tilde(1, 2), 3.0);
        assert_eq!(mu.beta_tilde(0, 2), 5.0);
        assert_eq!(pair_index(3, 2), 5);
    }

    #[test]
    fn fitted_multipliers_at_random_point_are_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let spec = random_spec(&mut rng, 3, 3);
        let point = random_point(&mut rng, 3, 3);
        let a = fit_multipliers(&spec, &point.candidate).unwrap();
        let b = fit_multipliers(&spec, &point.candidate).unwrap();
        assert_eq!(a.multipliers, b.multipliers);
        assert!(a.residual_norm >= 0.0);
        assert!(a.rank <= 7);
    }

    #[test]
    fn mismatched_multipliers_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let spec = random_spec(&mut rng, 3, 3);
        let mut point = random_point(&mut rng, 3, 3);
        point.multipliers.alpha.pop();
        assert!(lagrangian(&spec, &point).is_err());
        assert!(stationarity_residuals(&spec, &point).is_err());
    }
}
