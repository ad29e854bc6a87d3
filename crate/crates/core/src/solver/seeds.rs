//! Deterministic starting points for the multistart solvers.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::problem::{apply_energy_shift, trace_zero_shift, ProblemSpec, SolutionCandidate};
use crate::qbp::solve_qbp;
use crate::special::{default_theta0, uniform_seed};

use super::SolverConfig;

/// Scale of inactive weights in rank-restricted seeds.
const INACTIVE_WEIGHT_SCALE: f64 = 1e-3;

/// Exactly `config.num_starts` starting candidates, in trace-zero gauge.
///
/// Analytic seeds come first when they apply: the uniform-spectrum
/// candidate for orthogonal targets at evenly spaced times, then the exact
/// two-state solution. The rest alternate between seeds with only
/// `rank_hint` (default `m`) significant weights and fully random ones. A
/// single random stream is consumed in order, so a shorter list is always a
/// prefix of a longer one.
pub fn seed_candidates(spec: &ProblemSpec, config: &SolverConfig) -> Vec<SolutionCandidate> {
    let n = spec.dimension();
    let m = spec.num_targets();
    let mut seeds = Vec::with_capacity(config.num_starts);
    if config.use_analytic_seeds {
        if m <= n && spec.has_orthogonal_targets(1e-8) {
            if let Some(step) = spec.even_spacing(1e-9) {
                if let Ok(u) = uniform_seed(n, m, step, default_theta0(n)) {
                    seeds.push(u.candidate);
                }
            }
        }
        if m == 2 {
            let states = spec.states();
            if let Ok(sol) = solve_qbp(&states[0], &states[1], spec.times()[1]) {
                seeds.push(sol.candidate());
            }
        }
    }
    seeds.truncate(config.num_starts);

    let rank = config.rank_hint.unwrap_or(m).clamp(1, n);
    let times = spec.times();
    let min_gap = times
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let scale = PI / min_gap;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut restricted = true;
    while seeds.len() < config.num_starts {
        let eigenvalues: Vec<f64> = (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let amplitudes: Vec<f64> = (0..n)
            .map(|k| {
                let u: f64 = rng.random_range(0.0..1.0);
                if restricted && k >= rank {
                    INACTIVE_WEIGHT_SCALE * u
                } else {
                    0.2 + u
                }
            })
            .collect();
        let total: f64 = amplitudes.iter().map(|a| a * a).sum();
        let weights = amplitudes.iter().map(|a| a * a / total).collect();
        let mut phases = vec![0.0];
        phases.extend((1..m).map(|_| rng.random_range(-PI..PI)));
        seeds.push(SolutionCandidate::new(eigenvalues, weights, phases));
        restricted = !restricted;
    }
    seeds
        .into_iter()
        .map(|c| {
            let shift = trace_zero_shift(&c);
            apply_energy_shift(&c, shift, spec)
        })
        .collect()
}
