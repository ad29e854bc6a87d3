//! Problem and result files.
//!
//! Both are TOML documents with a `schema_version` key. Complex numbers are
//! `[re, im]` pairs; unknown keys are rejected.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use eoi_core::quantum::gram_matrix;
use eoi_core::{ProblemSpec, SolverConfig, StateVector, C64};
use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Failure;

pub const SCHEMA_VERSION: &str = "1";

/// Norm deviation above which a state is rejected.
const NORM_REJECT: f64 = 1e-6;
/// Norm deviation above which a state is renormalized with a warning.
const NORM_WARN: f64 = 1e-10;
const ORTHOGONAL: f64 = 1e-10;

pub type Complex = [f64; 2];

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub schema_version: String,
    pub dimension: usize,
    pub states: Vec<Vec<Complex>>,
    pub times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
}

/// Overrides of [`SolverConfig`] fields, by the same names.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub max_outer_iters: Option<usize>,
    pub max_inner_iters: Option<usize>,
    pub constraint_tol: Option<f64>,
    pub stationarity_tol: Option<f64>,
    pub num_starts: Option<usize>,
    pub penalty_init: Option<f64>,
    pub penalty_growth: Option<f64>,
    pub rank_hint: Option<usize>,
    pub use_analytic_seeds: Option<bool>,
}

impl Tolerances {
    pub fn apply(&self, config: &mut SolverConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = self.$f {
                    config.$f = v;
                }
            )*};
        }
        set!(
            max_outer_iters,
            max_inner_iters,
            constraint_tol,
            stationarity_tol,
            num_starts,
            penalty_init,
            penalty_growth,
            use_analytic_seeds
        );
        if self.rank_hint.is_some() {
            config.rank_hint = self.rank_hint;
        }
    }
}

/// A validated problem with its content hash.
pub struct LoadedProblem {
    pub file: ProblemFile,
    pub spec: ProblemSpec,
    pub hash: String,
}

fn malformed(msg: impl Into<String>) -> Failure {
    Failure::new(1, msg)
}

pub fn read_problem(path: &Path) -> Result<LoadedProblem, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| malformed(format!("{}: {e}", path.display())))?;
    let file: ProblemFile =
        toml::from_str(&text).map_err(|e| malformed(format!("{}: {e}", path.display())))?;
    load(file).map_err(|f| Failure::new(f.code, format!("{}: {}", path.display(), f.message)))
}

/// Checks a parsed problem and builds the spec.
pub fn load(file: ProblemFile) -> Result<LoadedProblem, Failure> {
    if file.schema_version != SCHEMA_VERSION {
        return Err(malformed(format!(
            "schema_version: unsupported version {:?}, expected {SCHEMA_VERSION:?}",
            file.schema_version
        )));
    }
    if file.states.len() != file.times.len() {
        return Err(malformed(format!(
            "states: {} states but {} times",
            file.states.len(),
            file.times.len()
        )));
    }
    let mut states = Vec::with_capacity(file.states.len());
    for (i, amps) in file.states.iter().enumerate() {
        states.push(checked_state(amps, &format!("states[{i}]"))?);
    }
    let same_length = states.windows(2).all(|w| w[0].dim() == w[1].dim());
    if same_length && states.len() > file.dimension {
        let gram = gram_matrix(&states).map_err(|e| malformed(e.to_string()))?;
        if gram.is_identity(ORTHOGONAL) {
            return Err(malformed(format!(
                "states: {} mutually orthogonal states in dimension {}; orthogonal targets \
                 are linearly independent, so m ≤ n is required",
                states.len(),
                file.dimension
            )));
        }
    }
    for (i, s) in states.iter().enumerate() {
        if s.dim() != file.dimension {
            return Err(malformed(format!(
                "states[{i}]: {} amplitudes but dimension = {}",
                s.dim(),
                file.dimension
            )));
        }
    }
    if let Some(tol) = &file.tolerances {
        let mut config = SolverConfig::default();
        tol.apply(&mut config);
        config
            .validate()
            .map_err(|e| malformed(format!("tolerances: {e}")))?;
    }
    let spec = ProblemSpec::new(states, file.times.clone()).map_err(|e| malformed(e.to_string()))?;
    let hash = problem_hash(&file);
    Ok(LoadedProblem { file, spec, hash })
}

/// Parses amplitudes, renormalizing small deviations.
pub fn checked_state(amps: &[Complex], field: &str) -> Result<StateVector, Failure> {
    if amps.is_empty() {
        return Err(malformed(format!("{field}: empty state")));
    }
    if amps.iter().flatten().any(|v| !v.is_finite()) {
        return Err(malformed(format!("{field}: non-finite amplitude")));
    }
    let v = DVector::from_iterator(amps.len(), amps.iter().map(|&[re, im]| C64::new(re, im)));
    let deviation = v.norm_squared() - 1.0;
    if deviation.abs() > NORM_REJECT {
        return Err(malformed(format!(
            "{field}: not normalized (norm^2 - 1 = {deviation:.3e})"
        )));
    }
    if deviation.abs() > NORM_WARN {
        warn!("{field}: renormalizing (norm^2 - 1 = {deviation:.3e})");
    }
    StateVector::normalized(v).map_err(|e| malformed(format!("{field}: {e}")))
}

/// SHA-256 over the dimension, amplitudes and times, independent of layout
/// and of solver settings.
pub fn problem_hash(file: &ProblemFile) -> String {
    let mut h = Sha256::new();
    h.update(b"eoi-problem\0");
    h.update((file.dimension as u64).to_le_bytes());
    h.update((file.states.len() as u64).to_le_bytes());
    for s in &file.states {
        h.update((s.len() as u64).to_le_bytes());
        for [re, im] in s {
            h.update(re.to_le_bytes());
            h.update(im.to_le_bytes());
        }
    }
    for t in &file.times {
        h.update(t.to_le_bytes());
    }
    let mut out = String::with_capacity(64);
    for b in h.finalize() {
        let _ = write!(out, "{b:02x}");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ResultFile {
    pub schema_version: String,
    pub command: String,
    pub problem_hash: String,
    pub status: String,
    pub objective: f64,
    pub constraint_residual_norm: f64,
    pub stationarity_residual_norm: f64,
    pub spectrum: Vec<f64>,
    pub weights: Vec<f64>,
    pub phases: Vec<f64>,
    /// Row-major; absent when no Hamiltonian could be built.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<Vec<Vec<Complex>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification: Option<Verification>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analytic: Option<Analytic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multistart: Option<Multistart>,
    pub timing: Timing,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trajectory: Vec<TrajectorySample>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Verification {
    pub passed: bool,
    pub fidelities: Vec<f64>,
    pub phases: Vec<f64>,
    pub objective: f64,
    pub trace: f64,
    pub hermiticity_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Analytic {
    pub epsilon: f64,
    pub omega: f64,
    pub overlap: f64,
    pub theta: f64,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Multistart {
    pub mode: String,
    pub rng_seed: u64,
    pub num_starts: usize,
    pub best_start: usize,
    pub starts: Vec<StartRecord>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct StartRecord {
    pub index: usize,
    pub status: String,
    pub objective: f64,
    pub constraint_residual_norm: f64,
    pub stationarity_residual_norm: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
}

/// Work counters. Wall-clock time goes to stderr only, so identical inputs
/// give identical files.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Timing {
    pub outer_iterations: usize,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySample {
    pub tau: f64,
    /// `|<psi_1|psi(tau)>|`.
    pub fidelity_initial: f64,
    /// `|<psi_2|psi(tau)>|`.
    pub fidelity_target: f64,
}

pub fn matrix_to_rows(h: &DMatrix<C64>) -> Vec<Vec<Complex>> {
    (0..h.nrows())
        .map(|i| (0..h.ncols()).map(|j| [h[(i, j)].re, h[(i, j)].im]).collect())
        .collect()
}

pub fn rows_to_matrix(rows: &[Vec<Complex>], n: usize) -> Result<DMatrix<C64>, Failure> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(malformed(format!("hamiltonian: expected {n} x {n} entries")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let [re, im] = rows[i][j];
        C64::new(re, im)
    }))
}

pub fn read_result(path: &Path) -> Result<ResultFile, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| malformed(format!("{}: {e}", path.display())))?;
    let result: ResultFile =
        toml::from_str(&text).map_err(|e| malformed(format!("{}: {e}", path.display())))?;
    if result.schema_version != SCHEMA_VERSION {
        return Err(malformed(format!(
            "{}: schema_version: unsupported version {:?}",
            path.display(),
            result.schema_version
        )));
    }
    Ok(result)
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String, Failure> {
    toml::to_string(value).map_err(|e| Failure::new(1, format!("serializing output: {e}")))
}

/// Writes `text` to `path`, or to stdout when `path` is `None`.
pub fn emit(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::new(1, format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
