//! Unconstrained parametrization of the search space and the merit functions
//! minimized by the inner solver.
//!
//! `z = [eps_1..eps_n, s_1..s_n, theta_2..theta_m]` with
//! `Lambda_k = s_k^2 / sum_j s_j^2`, so the weights stay on the simplex and
//! `theta_1 = 0` fixes the global phase.

use nalgebra::DVector;

use crate::kkt::{weighted_gradient, Gradient, KktPoint, Multipliers};
use crate::problem::{constraint_residuals, ProblemSpec, SolutionCandidate};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub n: usize,
    pub m: usize,
}

impl Layout {
    pub fn of(spec: &ProblemSpec) -> Self {
        Layout {
            n: spec.dimension(),
            m: spec.num_targets(),
        }
    }

    pub fn len(&self) -> usize {
        2 * self.n + self.m - 1
    }

    pub fn pack(&self, cand: &SolutionCandidate) -> DVector<f64> {
        let mut z = DVector::zeros(self.len());
        for k in 0..self.n {
            z[k] = cand.eigenvalues[k];
            z[self.n + k] = cand.weights[k].max(0.0).sqrt();
        }
        for i in 1..self.m {
            z[2 * self.n + i - 1] = cand.phases[i] - cand.phases[0];
        }
        z
    }

    pub fn unpack(&self, z: &DVector<f64>) -> SolutionCandidate {
        let n = self.n;
        let s = z.rows(n, n);
        let total = s.norm_squared();
        let eigenvalues = z.rows(0, n).iter().copied().collect();
        let weights = if total > 0.0 {
            s.iter().map(|v| v * v / total).collect()
        } else {
            vec![1.0 / n as f64; n]
        };
        let mut phases = vec![0.0];
        phases.extend(z.rows(2 * n, self.m - 1).iter().copied());
        SolutionCandidate::new(eigenvalues, weights, phases)
    }

    /// Rescales the `s` block to unit norm; the merit functions are invariant.
    pub fn normalize(&self, z: &mut DVector<f64>) {
        let mut s = z.rows_mut(self.n, self.n);
        let norm = s.norm();
        if norm > 0.0 {
            s /= norm;
        }
    }

    /// Chains a gradient in `(eps, Lambda, theta)` to `z`.
    fn chain(&self, z: &DVector<f64>, cand: &SolutionCandidate, g: &Gradient) -> DVector<f64> {
        let n = self.n;
        let total = z.rows(n, n).norm_squared();
        let mean: f64 = cand.weights.iter().zip(&g.weights).map(|(l, d)| l * d).sum();
        let mut out = DVector::zeros(self.len());
        for k in 0..n {
            out[k] = g.eigenvalues[k];
            if total > 0.0 {
                out[n + k] = 2.0 * z[n + k] / total * (g.weights[k] - mean);
            }
        }
        for i in 1..self.m {
            out[2 * n + i - 1] = g.phases[i];
        }
        out
    }
}

pub(crate) trait Merit {
    fn layout(&self) -> Layout;
    fn value(&self, z: &DVector<f64>) -> f64;
    fn gradient(&self, z: &DVector<f64>) -> DVector<f64>;
}

fn split(v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    v.chunks_exact(2).map(|c| (c[0], c[1])).unzip()
}

fn residuals(spec: &ProblemSpec, cand: &SolutionCandidate) -> Vec<f64> {
    constraint_residuals(spec, cand).expect("layout matches spec")
}

fn energy(cand: &SolutionCandidate) -> f64 {
    cand.eigenvalues.iter().map(|e| e * e).sum()
}

/// `sum eps^2 + sum_p (y_p c_p + rho/2 c_p^2)` over the interleaved
/// real/imaginary constraint residuals `c`.
pub(crate) struct AugmentedLagrangian<'a> {
    pub spec: &'a ProblemSpec,
    pub layout: Layout,
    pub y: Vec<f64>,
    pub rho: f64,
}

impl Merit for AugmentedLagrangian<'_> {
    fn layout(&self) -> Layout {
        self.layout
    }

    fn value(&self, z: &DVector<f64>) -> f64 {
        let cand = self.layout.unpack(z);
        let c = residuals(self.spec, &cand);
        let pen: f64 = c
            .iter()
            .zip(&self.y)
            .map(|(c, y)| y * c + 0.5 * self.rho * c * c)
            .sum();
        energy(&cand) + pen
    }

    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        let cand = self.layout.unpack(z);
        let c = residuals(self.spec, &cand);
        let w: Vec<f64> = c.iter().zip(&self.y).map(|(c, y)| y + self.rho * c).collect();
        let (a, b) = split(&w);
        let g = weighted_gradient(self.spec, &cand, 1.0, &a, &b, 0.0);
        self.layout.chain(z, &cand, &g)
    }
}

/// `|c|^2 + mu sum eps^2`.
pub(crate) struct LeastSquares<'a> {
    pub spec: &'a ProblemSpec,
    pub layout: Layout,
    pub mu: f64,
}

impl LeastSquares<'_> {
    pub fn value_of(spec: &ProblemSpec, cand: &SolutionCandidate, mu: f64) -> f64 {
        let c = residuals(spec, cand);
        c.iter().map(|c| c * c).sum::<f64>() + mu * energy(cand)
    }
}

impl Merit for LeastSquares<'_> {
    fn layout(&self) -> Layout {
        self.layout
    }

    fn value(&self, z: &DVector<f64>) -> f64 {
        Self::value_of(self.spec, &self.layout.unpack(z), self.mu)
    }

    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        let cand = self.layout.unpack(z);
        let c = residuals(self.spec, &cand);
        let w: Vec<f64> = c.iter().map(|c| 2.0 * c).collect();
        let (a, b) = split(&w);
        let g = weighted_gradient(self.spec, &cand, self.mu, &a, &b, 0.0);
        self.layout.chain(z, &cand, &g)
    }
}

/// KKT point from interleaved constraint multipliers `y`, with `gamma` chosen
/// to cancel the weighted mean of the `Lambda` derivatives.
pub(crate) fn kkt_point_from(spec: &ProblemSpec, cand: &SolutionCandidate, y: &[f64]) -> KktPoint {
    let (alpha, beta) = split(y);
    let g = weighted_gradient(spec, cand, 1.0, &alpha, &beta, 0.0);
    let gamma = -cand
        .weights
        .iter()
        .zip(&g.weights)
        .map(|(l, d)| l * d)
        .sum::<f64>();
    KktPoint {
        candidate: cand.clone(),
        multipliers: Multipliers { alpha, beta, gamma },
    }
}

/// Interleaves `(alpha, beta)` back into constraint order.
pub(crate) fn interleave(mult: &Multipliers) -> Vec<f64> {
    mult.alpha
        .iter()
        .zip(&mult.beta)
        .flat_map(|(a, b)| [*a, *b])
        .collect()
}
