//! Numerical solution of the general interpolation problem.
//!
//! [`solve`] runs an augmented-Lagrangian method from every seed: the inner
//! problem in `(eps, s, theta)` with `Lambda = s^2 / |s|^2` is minimized by
//! trust-region Newton, then the constraint multipliers are updated and the
//! penalty grows when the residual stalls. Near a solution the run finishes
//! with Newton steps on the full first-order system. [`solve_least_squares`] instead
//! minimizes `|c|^2 + mu sum eps^2` for instances that may have no exact
//! solution. Starts run in parallel; the reduction is order independent.

mod merit;
mod polish;
mod seeds;
mod trust_region;

use std::f64::consts::PI;

use log::{debug, info};
use rayon::prelude::*;

use crate::error::{EoiError, Result};
use crate::kkt::{fit_multipliers, kkt_residual_norm, objective, KktPoint, Multipliers};
use crate::problem::{
    apply_energy_shift, constraint_residual_norm, constraint_residuals, counting_report,
    trace_zero_shift, ProblemSpec, Regime, SolutionCandidate,
};

use merit::{interleave, kkt_point_from, AugmentedLagrangian, Layout, LeastSquares, Merit};

pub use seeds::seed_candidates;

/// Regularization weight of the least-squares mode.
pub const LSQ_MU: f64 = 1e-8;
/// Factor applied to `mu` between least-squares stages.
const LSQ_MU_DECAY: f64 = 0.01;
const LSQ_MU_FLOOR: f64 = 1e-20;
const RHO_MAX: f64 = 1e8;
/// Outer iterations at the penalty cap without real progress before the
/// penalty loop gives up.
const STALL_LIMIT: usize = 3;
/// Starting weight of the feasibility restart, large enough that the path
/// begins near low energy.
const RESTART_MU: f64 = 1e-2;
/// Residual below which the Newton refinement is attempted.
const POLISH_RESIDUAL: f64 = 1e-3;
/// Objectives closer than this count as tied between starts.
const TIE: f64 = 1e-10;
/// Seeds this close to feasible get least-squares multiplier estimates.
const WARM_MULTIPLIER_RESIDUAL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    pub constraint_tol: f64,
    pub stationarity_tol: f64,
    pub num_starts: usize,
    pub rng_seed: u64,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    pub rank_hint: Option<usize>,
    /// Include the closed-form seeds when they apply.
    pub use_analytic_seeds: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_outer_iters: 50,
            max_inner_iters: 200,
            constraint_tol: 1e-9,
            stationarity_tol: 1e-7,
            num_starts: 16,
            rng_seed: 0,
            penalty_init: 10.0,
            penalty_growth: 5.0,
            rank_hint: None,
            use_analytic_seeds: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(EoiError::InvalidConfig(msg));
        for (name, v) in [
            ("constraint_tol", self.constraint_tol),
            ("stationarity_tol", self.stationarity_tol),
            ("penalty_init", self.penalty_init),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.penalty_growth > 1.0 && self.penalty_growth.is_finite()) {
            return bad(format!(
                "penalty_growth must exceed 1, got {}",
                self.penalty_growth
            ));
        }
        if self.num_starts == 0 {
            return bad("num_starts must be at least 1".into());
        }
        if self.max_outer_iters == 0 || self.max_inner_iters == 0 {
            return bad("iteration limits must be at least 1".into());
        }
        if self.rank_hint == Some(0) {
            return bad("rank_hint must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    Infeasible,
    MaxIters,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "CONVERGED",
            SolveStatus::Infeasible => "INFEASIBLE",
            SolveStatus::MaxIters => "MAX_ITERS",
        }
    }
}

/// Outcome of one start.
#[derive(Debug, Clone, PartialEq)]
pub struct StartSummary {
    pub index: usize,
    pub objective: f64,
    pub constraint_residual_norm: f64,
    pub stationarity_residual_norm: f64,
    pub status: SolveStatus,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub candidate: SolutionCandidate,
    pub multipliers: Multipliers,
    pub objective_value: f64,
    pub constraint_residual_norm: f64,
    /// KKT residual for [`solve`]; gradient norm of the regularized
    /// least-squares merit for [`solve_least_squares`].
    pub stationarity_residual_norm: f64,
    pub status: SolveStatus,
    pub starts_summary: Vec<StartSummary>,
    /// Index of the winning start.
    pub best_start: usize,
    /// Constraint residual norm after each outer iteration of the winning
    /// start.
    pub residual_history: Vec<f64>,
}

struct Run {
    candidate: SolutionCandidate,
    multipliers: Multipliers,
    summary: StartSummary,
    history: Vec<f64>,
    /// Ranking key within a status class.
    rank_value: f64,
    /// Residual within the constraint tolerance; ranks ahead of `rank_value`.
    feasible: bool,
}

fn wrap_phase(x: f64) -> f64 {
    let r = (x + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r + 2.0 * PI
    } else {
        r
    }
}

/// Trace-zero gauge with phases wrapped to `(-pi, pi]`.
///
/// Eigenvalues carrying exactly zero weight do not enter the constraints,
/// so they are set to zero and the energy shift centres the others; this is
/// the lowest-energy point of the gauge orbit and keeps the trace at zero.
fn gauge(spec: &ProblemSpec, cand: &SolutionCandidate) -> SolutionCandidate {
    let active: Vec<usize> = (0..cand.weights.len()).filter(|&k| cand.weights[k] != 0.0).collect();
    let mut out = if active.is_empty() || active.len() == cand.weights.len() {
        apply_energy_shift(cand, trace_zero_shift(cand), spec)
    } else {
        let mean = active.iter().map(|&k| cand.eigenvalues[k]).sum::<f64>() / active.len() as f64;
        let mut shifted = apply_energy_shift(cand, -mean, spec);
        for (k, &w) in cand.weights.iter().enumerate() {
            if w == 0.0 {
                shifted.eigenvalues[k] = 0.0;
            }
        }
        shifted
    };
    for th in out.phases.iter_mut() {
        *th = wrap_phase(*th);
    }
    out
}

fn residual_norm(spec: &ProblemSpec, cand: &SolutionCandidate) -> f64 {
    constraint_residual_norm(spec, cand).expect("candidate matches spec")
}

fn kkt_norm(spec: &ProblemSpec, point: &KktPoint) -> f64 {
    kkt_residual_norm(spec, point).expect("point matches spec")
}

/// Better of the running multiplier estimate and a fresh least-squares fit.
fn best_multipliers(spec: &ProblemSpec, cand: &SolutionCandidate, y: &[f64]) -> (Multipliers, f64) {
    let point = kkt_point_from(spec, cand, y);
    let mut best = (point.multipliers.clone(), kkt_norm(spec, &point));
    if let Ok(fit) = fit_multipliers(spec, cand) {
        if fit.residual_norm < best.1 {
            best = (fit.multipliers, fit.residual_norm);
        }
    }
    best
}

/// End state of one start.
struct Finish {
    candidate: SolutionCandidate,
    multipliers: Multipliers,
    cnorm: f64,
    stationarity: f64,
    status: SolveStatus,
}

impl Finish {
    fn of(
        spec: &ProblemSpec,
        config: &SolverConfig,
        candidate: SolutionCandidate,
        multipliers: Multipliers,
        stationarity: f64,
    ) -> Self {
        let cnorm = residual_norm(spec, &candidate);
        let status = if cnorm > config.constraint_tol {
            SolveStatus::Infeasible
        } else if stationarity <= config.stationarity_tol {
            SolveStatus::Converged
        } else {
            SolveStatus::MaxIters
        };
        Finish {
            candidate,
            multipliers,
            cnorm,
            stationarity,
            status,
        }
    }

    /// Newton refinement of this point, if close enough to try, preceded by
    /// a feasibility restoration.
    fn refined(self, spec: &ProblemSpec, config: &SolverConfig) -> Finish {
        if self.cnorm > POLISH_RESIDUAL {
            return self;
        }
        let target = 1e-2 * config.constraint_tol;
        let mut best = self;
        if let Some(c) = polish::restore_feasibility(spec, &best.candidate, target) {
            let c = gauge(spec, &c);
            let restored = Finish::fitted(spec, config, c, None);
            best = best.or(restored);
        }
        if best.status != SolveStatus::Converged {
            let newton = polish::newton_kkt(
                spec,
                &best.candidate,
                &best.multipliers,
                target,
                1e-2 * config.stationarity_tol,
            );
            if let Some((c, mult)) = newton {
                let c = gauge(spec, &c);
                let refined = Finish::fitted(spec, config, c, Some(mult));
                best = best.or(refined);
            }
        }
        best
    }

    /// End state at `candidate` with the better of `guess` and fitted
    /// multipliers.
    fn fitted(
        spec: &ProblemSpec,
        config: &SolverConfig,
        candidate: SolutionCandidate,
        guess: Option<Multipliers>,
    ) -> Self {
        let mut best = guess.map(|m| {
            let point = KktPoint {
                candidate: candidate.clone(),
                multipliers: m,
            };
            let r = kkt_norm(spec, &point);
            (point.multipliers, r)
        });
        if let Ok(fit) = fit_multipliers(spec, &candidate) {
            if best.as_ref().is_none_or(|b| fit.residual_norm < b.1) {
                best = Some((fit.multipliers, fit.residual_norm));
            }
        }
        let (mult, stat) =
            best.unwrap_or_else(|| (Multipliers::zeros(spec.num_targets()), f64::INFINITY));
        Finish::of(spec, config, candidate, mult, stat)
    }

    fn rank(&self) -> u8 {
        match self.status {
            SolveStatus::Converged => 0,
            SolveStatus::MaxIters => 1,
            SolveStatus::Infeasible => 2,
        }
    }

    /// The better of two end states: status first, then the objective for
    /// feasible points and the residual otherwise.
    fn or(self, other: Finish) -> Finish {
        let take = match other.rank().cmp(&self.rank()) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => match self.status {
                SolveStatus::Infeasible => other.cnorm < self.cnorm,
                _ => objective(&other.candidate) < objective(&self.candidate) - TIE,
            },
        };
        if take {
            other
        } else {
            self
        }
    }
}

fn run_augmented_lagrangian(
    spec: &ProblemSpec,
    config: &SolverConfig,
    seed: &SolutionCandidate,
    index: usize,
) -> Run {
    let layout = Layout::of(spec);
    let np = spec.pairs().len();
    let mut y = vec![0.0; 2 * np];
    if residual_norm(spec, seed) <= WARM_MULTIPLIER_RESIDUAL {
        if let Ok(fit) = fit_multipliers(spec, seed) {
            y = interleave(&fit.multipliers);
        }
    }
    let mut rho = config.penalty_init;
    let mut z = layout.pack(seed);
    let gtol = 1e-2 * config.stationarity_tol;
    let mut prev = f64::INFINITY;
    let mut history = Vec::new();
    let mut inner_total = 0;
    let mut outer = 0;
    let mut stalled = 0;
    while outer < config.max_outer_iters {
        outer += 1;
        let merit = AugmentedLagrangian {
            spec,
            layout,
            y: y.clone(),
            rho,
        };
        let out = trust_region::minimize(&merit, z, config.max_inner_iters, gtol);
        inner_total += out.iterations;
        z = out.z;
        let cand = layout.unpack(&z);
        let c = constraint_residuals(spec, &cand).expect("candidate matches spec");
        let cnorm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (yp, cp) in y.iter_mut().zip(&c) {
            *yp += rho * cp;
        }
        history.push(cnorm);
        let stationarity = kkt_norm(spec, &kkt_point_from(spec, &cand, &y));
        debug!(
            "start {index} outer {outer}: |c| = {cnorm:.3e}, kkt = {stationarity:.3e}, rho = {rho:.1e}"
        );
        if cnorm <= config.constraint_tol && stationarity <= config.stationarity_tol {
            break;
        }
        if rho >= RHO_MAX && cnorm > 0.9 * prev {
            stalled += 1;
            if stalled >= STALL_LIMIT {
                break;
            }
        } else {
            stalled = 0;
        }
        if cnorm > 0.25 * prev {
            rho = (rho * config.penalty_growth).min(RHO_MAX);
        }
        prev = cnorm;
    }
    let cand = gauge(spec, &layout.unpack(&z));
    let (multipliers, stationarity) = best_multipliers(spec, &cand, &y);
    let mut best = Finish::of(spec, config, cand, multipliers, stationarity);
    if best.status != SolveStatus::Converged {
        best = best.refined(spec, config);
        debug!("start {index} after refinement: |c| {:.3e}, kkt {:.3e}", best.cnorm, best.stationarity);
    }
    if best.status != SolveStatus::Converged {
        // the penalty path can settle on a near-miss of the constraints;
        // restart from the seed on a feasibility-first path
        let path = least_squares_path(spec, config, seed, RESTART_MU);
        inner_total += path.inner;
        let cand = gauge(spec, &layout.unpack(&path.z));
        let restored = Finish::fitted(spec, config, cand, None).refined(spec, config);
        debug!(
            "start {index} feasibility restart: {} |c| {:.3e}",
            restored.status.as_str(),
            restored.cnorm
        );
        best = best.or(restored);
    }
    if history.last() != Some(&best.cnorm) {
        history.push(best.cnorm);
    }
    let Finish {
        candidate: cand,
        multipliers,
        cnorm,
        stationarity,
        status,
    } = best;
    let obj = objective(&cand);
    Run {
        summary: StartSummary {
            index,
            objective: obj,
            constraint_residual_norm: cnorm,
            stationarity_residual_norm: stationarity,
            status,
            outer_iterations: outer,
            inner_iterations: inner_total,
        },
        candidate: cand,
        multipliers,
        history,
        rank_value: obj,
        feasible: cnorm <= config.constraint_tol,
    }
}

/// Result of the staged least-squares minimization.
struct Path {
    z: nalgebra::DVector<f64>,
    grad_norm: f64,
    history: Vec<f64>,
    stages: usize,
    inner: usize,
}

/// Minimizes `|c|^2 + mu sum eps^2` from `seed`, starting at `mu0` and shrinking `mu` by stages
/// while the residual keeps falling.
fn least_squares_path(
    spec: &ProblemSpec,
    config: &SolverConfig,
    seed: &SolutionCandidate,
    mu0: f64,
) -> Path {
    let layout = Layout::of(spec);
    let stage = |mu: f64, z| {
        let merit = LeastSquares { spec, layout, mu };
        trust_region::minimize(&merit, z, config.max_inner_iters, 0.0)
    };
    let mut mu = mu0;
    let mut best = stage(mu, layout.pack(seed));
    let mut cnorm = residual_norm(spec, &layout.unpack(&best.z));
    let mut history = vec![cnorm];
    let mut inner = best.iterations;
    let mut stages = 1;
    while stages < config.max_outer_iters && cnorm > config.constraint_tol {
        mu *= LSQ_MU_DECAY;
        if mu < LSQ_MU_FLOOR {
            break;
        }
        stages += 1;
        let next = stage(mu, best.z.clone());
        inner += next.iterations;
        let c_next = residual_norm(spec, &layout.unpack(&next.z));
        if c_next > cnorm {
            // keep the previous stage so the reported residuals never rise
            break;
        }
        let stalled = cnorm - c_next <= 1e-3 * cnorm;
        best = next;
        cnorm = c_next;
        history.push(cnorm);
        if stalled {
            break;
        }
    }
    Path {
        z: best.z,
        grad_norm: best.grad_norm,
        history,
        stages,
        inner,
    }
}

fn run_least_squares(
    spec: &ProblemSpec,
    config: &SolverConfig,
    seed: &SolutionCandidate,
    index: usize,
) -> Run {
    let layout = Layout::of(spec);
    // the direct path and a continuation from heavy regularization, which
    // starts near low energy; the lower merit wins
    let direct = least_squares_path(spec, config, seed, LSQ_MU);
    let homotopy = least_squares_path(spec, config, seed, RESTART_MU);
    let merit_of = |p: &Path| LeastSquares::value_of(spec, &layout.unpack(&p.z), LSQ_MU);
    let extra = homotopy.inner.min(direct.inner);
    let mut path = if merit_of(&homotopy) < merit_of(&direct) {
        homotopy
    } else {
        direct
    };
    path.inner += extra;
    let mut cand = gauge(spec, &layout.unpack(&path.z));
    let mut cnorm = residual_norm(spec, &cand);
    let mut grad_norm = path.grad_norm;
    let mut history = path.history;
    if cnorm <= POLISH_RESIDUAL {
        // nearly feasible: finish on the constrained problem, which is the
        // vanishing-mu limit; a feasible finish beats an infeasible one
        let refined = Finish::fitted(spec, config, cand.clone(), None).refined(spec, config);
        let phi = |c: &SolutionCandidate| LeastSquares::value_of(spec, c, LSQ_MU);
        let feasible = refined.cnorm <= config.constraint_tol;
        let was_feasible = cnorm <= config.constraint_tol;
        let wins = if feasible != was_feasible {
            feasible
        } else {
            phi(&refined.candidate) < phi(&cand)
        };
        if refined.cnorm <= cnorm && wins {
            let merit = LeastSquares { spec, layout, mu: LSQ_MU };
            grad_norm = merit.gradient(&layout.pack(&refined.candidate)).norm();
            cand = refined.candidate;
            cnorm = refined.cnorm;
            history.push(cnorm);
        }
    }
    let mut inner = path.inner;
    if cnorm > config.constraint_tol && counting_report(spec).regime != Regime::Over {
        // the merit can hold a near-miss of the constraints in a local
        // minimum; a feasible point from the constrained solver has lower merit
        let constrained = run_augmented_lagrangian(spec, config, seed, index);
        inner += constrained.summary.inner_iterations;
        let phi = |c: &SolutionCandidate| LeastSquares::value_of(spec, c, LSQ_MU);
        if constrained.feasible && phi(&constrained.candidate) < phi(&cand) {
            let merit = LeastSquares { spec, layout, mu: LSQ_MU };
            grad_norm = merit.gradient(&layout.pack(&constrained.candidate)).norm();
            cand = constrained.candidate;
            cnorm = constrained.summary.constraint_residual_norm;
            history.push(cnorm);
        }
    }
    let multipliers = fit_multipliers(spec, &cand)
        .map(|f| f.multipliers)
        .unwrap_or_else(|_| Multipliers::zeros(spec.num_targets()));
    let status = if grad_norm <= config.stationarity_tol {
        SolveStatus::Converged
    } else {
        SolveStatus::MaxIters
    };
    let obj = objective(&cand);
    Run {
        summary: StartSummary {
            index,
            objective: obj,
            constraint_residual_norm: cnorm,
            stationarity_residual_norm: grad_norm,
            status,
            outer_iterations: path.stages,
            inner_iterations: inner,
        },
        // merit divided by mu, so ties are judged on the energy scale
        rank_value: LeastSquares::value_of(spec, &cand, LSQ_MU) / LSQ_MU,
        feasible: cnorm <= config.constraint_tol,
        candidate: cand,
        multipliers,
        history,
    }
}

/// Feasible runs first, then the lowest rank value; near ties go to the
/// smaller residual, then the lower start index.
fn better(a: &Run, b: &Run) -> bool {
    if a.feasible != b.feasible {
        return a.feasible;
    }
    let (ra, rb) = (a.rank_value, b.rank_value);
    if (ra - rb).abs() > TIE {
        return ra < rb;
    }
    let (ca, cb) = (
        a.summary.constraint_residual_norm,
        b.summary.constraint_residual_norm,
    );
    if ca != cb {
        return ca < cb;
    }
    a.summary.index < b.summary.index
}

fn pick(runs: &[Run], status: SolveStatus, by_residual: bool) -> Option<&Run> {
    let mut best: Option<&Run> = None;
    for r in runs.iter().filter(|r| r.summary.status == status) {
        let wins = match best {
            None => true,
            Some(b) if by_residual => {
                let (ca, cb) = (
                    r.summary.constraint_residual_norm,
                    b.summary.constraint_residual_norm,
                );
                ca < cb || (ca == cb && better(r, b))
            }
            Some(b) => better(r, b),
        };
        if wins {
            best = Some(r);
        }
    }
    best
}

fn reduce(runs: Vec<Run>) -> SolveResult {
    let winner = pick(&runs, SolveStatus::Converged, false)
        .or_else(|| pick(&runs, SolveStatus::MaxIters, false))
        .or_else(|| pick(&runs, SolveStatus::Infeasible, true))
        .expect("at least one start");
    let starts_summary = runs.iter().map(|r| r.summary.clone()).collect();
    SolveResult {
        candidate: winner.candidate.clone(),
        multipliers: winner.multipliers.clone(),
        objective_value: winner.summary.objective,
        constraint_residual_norm: winner.summary.constraint_residual_norm,
        stationarity_residual_norm: winner.summary.stationarity_residual_norm,
        status: winner.summary.status,
        best_start: winner.summary.index,
        residual_history: winner.history.clone(),
        starts_summary,
    }
}

type Runner = fn(&ProblemSpec, &SolverConfig, &SolutionCandidate, usize) -> Run;

fn multistart(spec: &ProblemSpec, config: &SolverConfig, runner: Runner) -> Result<SolveResult> {
    config.validate()?;
    let seeds = seed_candidates(spec, config);
    let runs: Vec<Run> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, s)| runner(spec, config, s, i))
        .collect();
    let result = reduce(runs);
    info!(
        "best start {} of {}: {} objective {:.12e} |c| {:.3e}",
        result.best_start,
        config.num_starts,
        result.status.as_str(),
        result.objective_value,
        result.constraint_residual_norm
    );
    Ok(result)
}

/// Minimizes `sum eps_k^2` subject to the interpolation constraints.
///
/// Meant for instances with no more constraint equations than unknowns;
/// overdetermined instances usually end `Infeasible` and should go through
/// [`solve_least_squares`].
pub fn solve(spec: &ProblemSpec, config: &SolverConfig) -> Result<SolveResult> {
    multistart(spec, config, run_augmented_lagrangian)
}

/// Minimizes `|c|^2 + mu sum eps_k^2`, starting at `mu = 1e-8` and shrinking
/// `mu` by stages while the residual keeps falling.
///
/// The recorded per-stage residuals are non-increasing: a stage that would
/// raise the residual is discarded and ends the run.
pub fn solve_least_squares(spec: &ProblemSpec, config: &SolverConfig) -> Result<SolveResult> {
    multistart(spec, config, run_least_squares)
}
