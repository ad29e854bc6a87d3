//! Newton iteration on the full first-order system, used to finish an
//! augmented-Lagrangian run near a solution.
//!
//! With the active weights free and the inactive ones held at zero, the
//! unknowns are `x = (eps, Lambda_active, theta_2..theta_m)` and the
//! multipliers of the pair constraints and the normalization. Each step
//! solves
//!
//! ```text
//! [ H  A^T ] [ dx ]   [ -grad f ]
//! [ A   0  ] [ mu ] = [   -r    ]
//! ```
//!
//! with `H` the Hessian of the Lagrangian and `A` the constraint Jacobian.
//! This converges quadratically even when the Jacobian is badly conditioned,
//! which is where the penalty iteration slows to a crawl. When the nearest
//! feasible point is far along a flat valley of the residual,
//! [`restore_feasibility`] first walks there with Levenberg-Marquardt steps
//! on the constraints alone.

use nalgebra::{DMatrix, DVector};

use crate::kkt::{weighted_gradient, Multipliers, ACTIVE_WEIGHT};
use crate::problem::{constraint_residuals, ProblemSpec, SolutionCandidate};

const MAX_ITERS: usize = 30;
const MAX_HALVINGS: usize = 30;
const LM_MAX_ITERS: usize = 5000;
const GEODESIC_RATIO: f64 = 0.75;

struct System<'a> {
    spec: &'a ProblemSpec,
    base: SolutionCandidate,
    active: Vec<usize>,
}

impl System<'_> {
    fn dim(&self) -> usize {
        let n = self.spec.dimension();
        n + self.active.len() + self.spec.num_targets() - 1
    }

    fn num_constraints(&self) -> usize {
        2 * self.spec.pairs().len() + 1
    }

    fn pack(&self, cand: &SolutionCandidate) -> DVector<f64> {
        let n = self.spec.dimension();
        let na = self.active.len();
        let mut x = DVector::zeros(self.dim());
        for k in 0..n {
            x[k] = cand.eigenvalues[k];
        }
        for (a, &k) in self.active.iter().enumerate() {
            x[n + a] = cand.weights[k];
        }
        for i in 1..self.spec.num_targets() {
            x[n + na + i - 1] = cand.phases[i] - cand.phases[0];
        }
        x
    }

    fn unpack(&self, x: &DVector<f64>) -> SolutionCandidate {
        let n = self.spec.dimension();
        let na = self.active.len();
        let mut cand = self.base.clone();
        cand.weights.iter_mut().for_each(|w| *w = 0.0);
        for k in 0..n {
            cand.eigenvalues[k] = x[k];
        }
        for (a, &k) in self.active.iter().enumerate() {
            cand.weights[k] = x[n + a];
        }
        cand.phases[0] = 0.0;
        for i in 1..self.spec.num_targets() {
            cand.phases[i] = x[n + na + i - 1];
        }
        cand
    }

    /// Pair residuals (interleaved real/imaginary) followed by the
    /// normalization residual.
    fn residuals(&self, cand: &SolutionCandidate) -> DVector<f64> {
        let mut r = constraint_residuals(self.spec, cand).expect("candidate matches spec");
        r.push(cand.weights.iter().sum::<f64>() - 1.0);
        DVector::from_vec(r)
    }

    fn lagrangian_gradient(&self, x: &DVector<f64>, mu: &DVector<f64>) -> DVector<f64> {
        let cand = self.unpack(x);
        let np = self.spec.pairs().len();
        let alpha: Vec<f64> = (0..np).map(|p| mu[2 * p]).collect();
        let beta: Vec<f64> = (0..np).map(|p| mu[2 * p + 1]).collect();
        let g = weighted_gradient(self.spec, &cand, 1.0, &alpha, &beta, mu[2 * np]);
        let n = self.spec.dimension();
        let na = self.active.len();
        let mut out = DVector::zeros(self.dim());
        for k in 0..n {
            out[k] = g.eigenvalues[k];
        }
        for (a, &k) in self.active.iter().enumerate() {
            out[n + a] = g.weights[k];
        }
        for i in 1..self.spec.num_targets() {
            out[n + na + i - 1] = g.phases[i];
        }
        out
    }

    fn jacobian(&self, cand: &SolutionCandidate) -> DMatrix<f64> {
        let n = self.spec.dimension();
        let na = self.active.len();
        let mut a = DMatrix::zeros(self.num_constraints(), self.dim());
        let theta_col = |i: usize| (i >= 1).then(|| n + na + i - 1);
        for (p, pair) in self.spec.pairs().iter().enumerate() {
            let shift = cand.phases[pair.i] - cand.phases[pair.j];
            let (mut dre, mut dim) = (0.0, 0.0);
            for k in 0..n {
                let (s, c) = (cand.eigenvalues[k] * pair.dt + shift).sin_cos();
                let lam = cand.weights[k];
                a[(2 * p, k)] = -lam * pair.dt * s;
                a[(2 * p + 1, k)] = lam * pair.dt * c;
                dre -= lam * s;
                dim += lam * c;
            }
            for (col, &k) in self.active.iter().enumerate() {
                let (s, c) = (cand.eigenvalues[k] * pair.dt + shift).sin_cos();
                a[(2 * p, n + col)] = c;
                a[(2 * p + 1, n + col)] = s;
            }
            if let Some(col) = theta_col(pair.i) {
                a[(2 * p, col)] += dre;
                a[(2 * p + 1, col)] += dim;
            }
            if let Some(col) = theta_col(pair.j) {
                a[(2 * p, col)] -= dre;
                a[(2 * p + 1, col)] -= dim;
            }
        }
        let last = self.num_constraints() - 1;
        for col in 0..na {
            a[(last, n + col)] = 1.0;
        }
        a
    }

    fn hessian(&self, x: &DVector<f64>, mu: &DVector<f64>) -> DMatrix<f64> {
        let d = x.len();
        let mut h = DMatrix::zeros(d, d);
        let mut xp = x.clone();
        for j in 0..d {
            let step = 1e-6 * x[j].abs().max(1.0);
            xp[j] = x[j] + step;
            let gp = self.lagrangian_gradient(&xp, mu);
            xp[j] = x[j] - step;
            let gm = self.lagrangian_gradient(&xp, mu);
            xp[j] = x[j];
            h.set_column(j, &((gp - gm) / (2.0 * step)));
        }
        (&h + h.transpose()) * 0.5
    }

    /// Norm of the full first-order system at `(x, mu)`.
    fn merit(&self, x: &DVector<f64>, mu: &DVector<f64>) -> f64 {
        let r = self.residuals(&self.unpack(x));
        (r.norm_squared() + self.lagrangian_gradient(x, mu).norm_squared()).sqrt()
    }
}

fn active_system<'a>(spec: &'a ProblemSpec, cand: &SolutionCandidate) -> Option<System<'a>> {
    let active: Vec<usize> = (0..spec.dimension())
        .filter(|&k| cand.weights[k] > ACTIVE_WEIGHT)
        .collect();
    (!active.is_empty()).then(|| System {
        spec,
        base: cand.clone(),
        active,
    })
}

/// Largest step fraction that keeps the active weights above a tenth of
/// their current values.
fn weight_step_limit(sys: &System, x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    let n = sys.spec.dimension();
    let mut t: f64 = 1.0;
    for a in 0..sys.active.len() {
        let (w, dw) = (x[n + a], dx[n + a]);
        if dw < 0.0 {
            t = t.min(0.9 * w / -dw);
        }
    }
    t
}

/// Levenberg-Marquardt on the constraint residuals, ignoring the objective.
pub(crate) fn restore_feasibility(
    spec: &ProblemSpec,
    cand: &SolutionCandidate,
    target_residual: f64,
) -> Option<SolutionCandidate> {
    let sys = active_system(spec, cand)?;
    let mut x = sys.pack(cand);
    let mut r = sys.residuals(cand);
    let mut damping = 1e-6;
    for _ in 0..LM_MAX_ITERS {
        if r.norm() <= target_residual {
            break;
        }
        let a = sys.jacobian(&sys.unpack(&x));
        if a.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let svd = a.clone().svd(true, true);
        let (u, vt) = (svd.u.as_ref()?, svd.v_t.as_ref()?);
        let scale = svd.singular_values.max().max(1e-300);
        let mut improved = false;
        while damping < 1e20 {
            let lam = damping * scale * scale;
            let solve = |rhs: &DVector<f64>| {
                let ub = u.transpose() * rhs;
                let coef = DVector::from_iterator(
                    ub.len(),
                    svd.singular_values.iter().zip(ub.iter()).map(|(s, c)| -s * c / (s * s + lam)),
                );
                vt.transpose() * coef
            };
            let v = solve(&r);
            // second-order correction along v for curved valleys
            let h = 0.1;
            let r_h = sys.residuals(&sys.unpack(&(&x + &v * h)));
            let r_vv = ((&r_h - &r) / h - &a * &v) * (2.0 / h);
            let acc = solve(&r_vv);
            let dx = if acc.norm() <= GEODESIC_RATIO * v.norm() {
                &v + &acc * 0.5
            } else {
                v
            };
            let t = weight_step_limit(&sys, &x, &dx);
            let trial = &x + &dx * t;
            let r_trial = sys.residuals(&sys.unpack(&trial));
            if r_trial.norm() < r.norm() {
                x = trial;
                r = r_trial;
                damping = (damping * 0.3).max(1e-15);
                improved = true;
                break;
            }
            damping *= 3.0;
        }
        if !improved {
            break;
        }
    }
    Some(sys.unpack(&x))
}

fn to_multipliers(mu: &DVector<f64>, np: usize) -> Multipliers {
    Multipliers {
        alpha: (0..np).map(|p| mu[2 * p]).collect(),
        beta: (0..np).map(|p| mu[2 * p + 1]).collect(),
        gamma: mu[2 * np],
    }
}

/// Refines `cand` with multiplier guess `start` toward a KKT point. Returns
/// `None` when the linear systems break down.
pub(crate) fn newton_kkt(
    spec: &ProblemSpec,
    cand: &SolutionCandidate,
    start: &Multipliers,
    target_residual: f64,
    target_stationarity: f64,
) -> Option<(SolutionCandidate, Multipliers)> {
    let sys = active_system(spec, cand)?;
    let np = spec.pairs().len();
    let d = sys.dim();
    let nc = sys.num_constraints();
    let mut x = sys.pack(cand);
    let mut mu = DVector::zeros(nc);
    for p in 0..np {
        mu[2 * p] = start.alpha[p];
        mu[2 * p + 1] = start.beta[p];
    }
    mu[2 * np] = start.gamma;
    let mut merit = sys.merit(&x, &mu);
    for _ in 0..MAX_ITERS {
        let c = sys.unpack(&x);
        let r = sys.residuals(&c);
        if r.norm() <= target_residual && sys.lagrangian_gradient(&x, &mu).norm() <= target_stationarity {
            break;
        }
        let h = sys.hessian(&x, &mu);
        let a = sys.jacobian(&c);
        let mut k = DMatrix::zeros(d + nc, d + nc);
        k.view_mut((0, 0), (d, d)).copy_from(&h);
        k.view_mut((0, d), (d, nc)).copy_from(&a.transpose());
        k.view_mut((d, 0), (nc, d)).copy_from(&a);
        let mut rhs = DVector::zeros(d + nc);
        for j in 0..spec.dimension() {
            rhs[j] = -2.0 * x[j];
        }
        rhs.rows_mut(d, nc).copy_from(&(-&r));
        if k.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let svd = k.svd(true, true);
        let smax = svd.singular_values.max();
        let sol = svd.solve(&rhs, 1e-14 * smax).ok()?;
        let dx = sol.rows(0, d).into_owned();
        let dmu = sol.rows(d, nc) - &mu;

        let mut t = weight_step_limit(&sys, &x, &dx);
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let trial = &x + &dx * t;
            let mu_trial = &mu + &dmu * t;
            let m_trial = sys.merit(&trial, &mu_trial);
            if m_trial < merit {
                x = trial;
                mu = mu_trial;
                merit = m_trial;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Some((sys.unpack(&x), to_multipliers(&mu, np)))
}
