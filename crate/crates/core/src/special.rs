//! Orthogonal targets at evenly spaced times and the uniform-spectrum
//! candidate.
//!
//! For `m` mutually orthogonal targets at `t_i = (i - 1) t`, taking all
//! phases zero, the constraints reduce to
//! `sum_k Lambda_k e^{i l eps_k t} = 0` for `l = 1, ..., m - 1`. Equal weights
//! `1/n` and eigenphases `eps_k t = 2 k pi / n + theta_0` spread uniformly on
//! the unit circle satisfy all of them as long as `m <= n`, since the
//! `n`-th roots of unity raised to the power `l` sum to zero unless `n | l`.

use std::f64::consts::PI;

use log::debug;

use crate::error::{EoiError, Result};
use crate::kkt::{fit_multipliers, Multipliers};
use crate::problem::{apply_energy_shift, trace_zero_shift, ProblemSpec, SolutionCandidate};
use crate::quantum::{StateVector, C64};
use crate::solver::{solve, SolveStatus, SolverConfig};

/// Uniform-spectrum candidate for `m` orthogonal targets spaced by `t`.
#[derive(Debug, Clone)]
pub struct UniformSeed {
    pub n: usize,
    pub m: usize,
    pub t: f64,
    pub theta0: f64,
    pub candidate: SolutionCandidate,
}

/// `theta_0 = -(n + 1) pi / n`, which centers the spectrum on zero.
pub fn default_theta0(n: usize) -> f64 {
    -((n + 1) as f64) * PI / n as f64
}

/// `(1/n) sum_{k=1}^{n} e^{i l (2 k pi / n + theta_0)}`.
pub fn circle_sum(n: usize, l: usize, theta0: f64) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for k in 1..=n {
        // reduce k l mod n first so large l keeps full precision
        let r = ((k * l) % n) as f64;
        acc += C64::from_polar(1.0, 2.0 * PI * r / n as f64 + l as f64 * theta0);
    }
    acc / n as f64
}

/// `eps_k = (2 k pi / n + theta_0) / t`, `Lambda_k = 1/n`, `theta_i = 0`.
pub fn uniform_seed(n: usize, m: usize, t: f64, theta0: f64) -> Result<UniformSeed> {
    if m < 2 {
        return Err(EoiError::InvalidProblem(format!(
            "need at least two targets, got {m}"
        )));
    }
    if m > n {
        return Err(EoiError::TooManyColumns {
            count: m,
            dimension: n,
        });
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(EoiError::InvalidProblem(format!(
            "time spacing must be positive, got {t}"
        )));
    }
    let eigenvalues = (1..=n)
        .map(|k| (2.0 * PI * k as f64 / n as f64 + theta0) / t)
        .collect();
    let candidate = SolutionCandidate::new(eigenvalues, vec![1.0 / n as f64; n], vec![0.0; m]);
    Ok(UniformSeed {
        n,
        m,
        t,
        theta0,
        candidate,
    })
}

impl UniformSeed {
    /// Basis states `e_1, ..., e_m` at times `0, t, ..., (m - 1) t`.
    pub fn spec(&self) -> ProblemSpec {
        let states = (0..self.m).map(|i| StateVector::basis(self.n, i)).collect();
        let times = (0..self.m).map(|i| i as f64 * self.t).collect();
        ProblemSpec::new(states, times).expect("basis targets form a valid problem")
    }

    /// `|sum_k Lambda_k e^{i l eps_k t}|` for `l = 1, ..., m - 1`, evaluated
    /// from the candidate.
    pub fn structure_residuals(&self) -> Vec<f64> {
        let c = &self.candidate;
        (1..self.m)
            .map(|l| {
                c.eigenvalues
                    .iter()
                    .zip(&c.weights)
                    .map(|(e, w)| C64::from_polar(*w, l as f64 * e * self.t))
                    .sum::<C64>()
                    .norm()
            })
            .collect()
    }

    /// The candidate shifted to `sum eps_k = 0`.
    pub fn regauged(&self) -> SolutionCandidate {
        apply_energy_shift(&self.candidate, trace_zero_shift(&self.candidate), &self.spec())
    }

    /// `sum (eps_k - mean eps)^2`, independent of `theta_0`.
    pub fn regauged_objective(&self) -> f64 {
        self.regauged().eigenvalues.iter().map(|e| e * e).sum()
    }

    /// `sum eps_k^2` without regauging.
    pub fn raw_objective(&self) -> f64 {
        self.candidate.eigenvalues.iter().map(|e| e * e).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Stationary,
    NotStationary,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Stationary => "STATIONARY",
            Verdict::NotStationary => "NOT_STATIONARY",
            Verdict::Inconclusive => "INCONCLUSIVE",
        }
    }

    fn from_residual(r: f64) -> Self {
        if r < STATIONARY_BELOW {
            Verdict::Stationary
        } else if r >= NOT_STATIONARY_ABOVE {
            Verdict::NotStationary
        } else {
            Verdict::Inconclusive
        }
    }
}

pub const STATIONARY_BELOW: f64 = 1e-8;
pub const NOT_STATIONARY_ABOVE: f64 = 1e-4;

/// Numerical evidence on whether a uniform seed is a KKT point.
#[derive(Debug, Clone)]
pub struct StationarityReport {
    /// Smallest KKT residual norm over all multipliers.
    pub residual_norm: f64,
    pub multipliers: Multipliers,
    pub rank: usize,
    pub verdict: Verdict,
    /// Regauged objective of the seed.
    pub seed_objective: f64,
    /// Objective and status of the general solver on the same instance.
    pub solver_objective: Option<f64>,
    pub solver_status: Option<SolveStatus>,
    /// The solver found a feasible point with a lower objective.
    pub solver_improves: bool,
    /// All target phases were fixed to zero when forming the seed.
    pub assumes_zero_phases: bool,
}

/// Fits multipliers at the regauged seed and runs the solver with the default
/// configuration.
pub fn is_eoi_stationary(seed: &UniformSeed) -> StationarityReport {
    is_eoi_stationary_with(seed, &SolverConfig::default())
}

pub fn is_eoi_stationary_with(seed: &UniformSeed, config: &SolverConfig) -> StationarityReport {
    let spec = seed.spec();
    let cand = seed.regauged();
    let seed_objective = seed.regauged_objective();
    let (residual_norm, multipliers, rank) = match fit_multipliers(&spec, &cand) {
        Ok(fit) => (fit.residual_norm, fit.multipliers, fit.rank),
        Err(e) => {
            debug!("multiplier fit failed: {e}");
            (f64::INFINITY, Multipliers::zeros(seed.m), 0)
        }
    };
    let verdict = if residual_norm.is_finite() {
        Verdict::from_residual(residual_norm)
    } else {
        Verdict::Inconclusive
    };
    let (solver_objective, solver_status) = match solve(&spec, config) {
        Ok(res) => (Some(res.objective_value), Some(res.status)),
        Err(e) => {
            debug!("solver failed on uniform instance: {e}");
            (None, None)
        }
    };
    let solver_improves = matches!(
        (solver_objective, solver_status),
        (Some(obj), Some(SolveStatus::Converged)) if obj < seed_objective - 1e-7 * seed_objective.max(1.0)
    );
    StationarityReport {
        residual_norm,
        multipliers,
        rank,
        verdict,
        seed_objective,
        solver_objective,
        solver_status,
        solver_improves,
        assumes_zero_phases: true,
    }
}
