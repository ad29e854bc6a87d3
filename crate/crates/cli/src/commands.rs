use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use eoi_core::kkt::{fit_multipliers, kkt_residual_norm, objective};
use eoi_core::problem::{constraint_residual_norm, counting_report};
use eoi_core::qbp::{qbp_kkt_point, qbp_trajectory, solve_qbp};
use eoi_core::quantum::phase_invariant_fidelity;
use eoi_core::reconstruct::{reconstruct_hamiltonian, verify as verify_hamiltonian, verify_matrix};
use eoi_core::solver::{solve as solve_eoi, solve_least_squares};
use eoi_core::special::{default_theta0, is_eoi_stationary_with, uniform_seed};
use eoi_core::{
    ProblemSpec, Regime, SolveResult, SolveStatus, SolverConfig, StateVector, VerificationReport,
};
use log::info;
use serde::Deserialize;

use crate::files::{
    self, checked_state, emit, matrix_to_rows, problem_hash, read_problem, read_result,
    rows_to_matrix, to_toml, Analytic, Multistart, ProblemFile, ResultFile, StartRecord, Timing,
    TrajectorySample, Verification, SCHEMA_VERSION,
};
use crate::{Failure, QbpArgs, ScanArgs, ScanMode, SeedSpecialArgs, SolveArgs, VerifyArgs};

fn core_error(e: eoi_core::EoiError) -> Failure {
    Failure::new(1, e.to_string())
}

/// Numeric status code, equal to the exit code of `solve`.
fn status_code(s: SolveStatus) -> u8 {
    match s {
        SolveStatus::Converged => 0,
        SolveStatus::Infeasible => 2,
        SolveStatus::MaxIters => 3,
    }
}

fn verification_table(r: &VerificationReport) -> Verification {
    Verification {
        passed: r.passed,
        fidelities: r.fidelities.clone(),
        phases: r.phases.clone(),
        objective: r.objective,
        trace: r.trace,
        hermiticity_residual: r.hermiticity_residual,
    }
}

fn default_out(problem: &Path) -> PathBuf {
    let stem = problem
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "problem".into());
    problem.with_file_name(format!("{stem}.result.toml"))
}

fn solver_config(file: &ProblemFile, args: &SolveArgs) -> Result<SolverConfig, Failure> {
    let mut config = SolverConfig::default();
    if let Some(t) = &file.tolerances {
        t.apply(&mut config);
    }
    if let Some(s) = file.seed {
        config.rng_seed = s;
    }
    if let Some(v) = args.tol_constraint {
        config.constraint_tol = v;
    }
    if let Some(v) = args.tol_stationarity {
        config.stationarity_tol = v;
    }
    if let Some(v) = args.starts {
        config.num_starts = v;
    }
    if let Some(v) = args.seed {
        config.rng_seed = v;
    }
    if args.rank_hint.is_some() {
        config.rank_hint = args.rank_hint;
    }
    config.validate().map_err(core_error)?;
    Ok(config)
}

fn run_solver(
    spec: &ProblemSpec,
    config: &SolverConfig,
    least_squares: bool,
) -> Result<SolveResult, Failure> {
    let r = if least_squares {
        solve_least_squares(spec, config)
    } else {
        solve_eoi(spec, config)
    };
    r.map_err(core_error)
}

/// A least-squares fit is stationary for its merit, but it only counts as
/// CONVERGED when it actually interpolates.
fn reported_status(result: &SolveResult, config: &SolverConfig, least_squares: bool) -> SolveStatus {
    if least_squares && result.constraint_residual_norm > config.constraint_tol {
        SolveStatus::Infeasible
    } else {
        result.status
    }
}

pub fn solve(args: &SolveArgs) -> Result<u8, Failure> {
    let problem = read_problem(&args.problem)?;
    let spec = &problem.spec;
    let config = solver_config(&problem.file, args)?;
    let counting = counting_report(spec);
    if counting.regime == Regime::Over && !args.least_squares {
        return Err(Failure::new(
            1,
            format!(
                "{}: overdetermined ({} equations, {} unknowns); exact interpolation is not \
                 generically possible, rerun with --least-squares",
                args.problem.display(),
                counting.num_constraint_equations,
                counting.num_unknowns
            ),
        ));
    }

    let clock = Instant::now();
    let result = run_solver(spec, &config, args.least_squares)?;
    let elapsed = clock.elapsed();
    let status = reported_status(&result, &config, args.least_squares);

    let mut failed_check = None;
    let (hamiltonian, verification) = match reconstruct_hamiltonian(spec, &result.candidate) {
        Ok(ham) => match verify_hamiltonian(spec, &ham) {
            Ok(report) => {
                if !report.passed {
                    failed_check = Some(format!(
                        "verification failed (min fidelity {:.12})",
                        report.min_fidelity()
                    ));
                }
                (Some(matrix_to_rows(&ham.matrix)), Some(verification_table(&report)))
            }
            Err(e) => {
                failed_check = Some(format!("verification: {e}"));
                (Some(matrix_to_rows(&ham.matrix)), None)
            }
        },
        Err(e) => {
            failed_check = Some(format!("reconstruction: {e}"));
            (None, None)
        }
    };

    let starts = result
        .starts_summary
        .iter()
        .map(|s| StartRecord {
            index: s.index,
            status: s.status.as_str().into(),
            objective: s.objective,
            constraint_residual_norm: s.constraint_residual_norm,
            stationarity_residual_norm: s.stationarity_residual_norm,
            outer_iterations: s.outer_iterations,
            inner_iterations: s.inner_iterations,
        })
        .collect::<Vec<_>>();
    let timing = Timing {
        outer_iterations: starts.iter().map(|s| s.outer_iterations).sum(),
        inner_iterations: starts.iter().map(|s| s.inner_iterations).sum(),
    };
    let out = ResultFile {
        schema_version: SCHEMA_VERSION.into(),
        command: "solve".into(),
        problem_hash: problem.hash.clone(),
        status: status.as_str().into(),
        objective: result.objective_value,
        constraint_residual_norm: result.constraint_residual_norm,
        stationarity_residual_norm: result.stationarity_residual_norm,
        spectrum: result.candidate.eigenvalues.clone(),
        weights: result.candidate.weights.clone(),
        phases: result.candidate.phases.clone(),
        hamiltonian,
        verification: verification.clone(),
        analytic: None,
        multistart: Some(Multistart {
            mode: if args.least_squares { "least-squares" } else { "augmented-lagrangian" }.into(),
            rng_seed: config.rng_seed,
            num_starts: config.num_starts,
            best_start: result.best_start,
            starts,
        }),
        timing,
        trajectory: Vec::new(),
    };
    let out_path = args.out.clone().unwrap_or_else(|| default_out(&args.problem));
    emit(Some(&out_path), &to_toml(&out)?)?;

    eprintln!("status     {}", status.as_str());
    eprintln!("objective  {:.12e}", result.objective_value);
    eprintln!("constraint {:.3e}", result.constraint_residual_norm);
    eprintln!("stationary {:.3e}", result.stationarity_residual_norm);
    if let Some(v) = &verification {
        let fids: Vec<String> = v.fidelities.iter().map(|f| format!("{f:.12}")).collect();
        eprintln!("fidelities {}", fids.join(" "));
    }
    eprintln!("elapsed    {:.3} s", elapsed.as_secs_f64());
    eprintln!("wrote      {}", out_path.display());

    let code = status_code(status);
    if code == 0 {
        if let Some(msg) = failed_check {
            eprintln!("error: converged result did not check out: {msg}");
            return Ok(2);
        }
    } else if let Some(msg) = failed_check {
        info!("{msg}");
    }
    Ok(code)
}

#[derive(Deserialize)]
struct InlineState {
    v: Vec<files::Complex>,
}

fn parse_inline(text: &str, field: &str) -> Result<Vec<files::Complex>, Failure> {
    toml::from_str::<InlineState>(&format!("v = {text}"))
        .map(|s| s.v)
        .map_err(|e| Failure::new(1, format!("{field}: expected an array of [re, im] pairs: {e}")))
}

/// Evenly spaced points in `[from, to]`, both ends included.
fn grid(from: f64, to: f64, steps: usize) -> Vec<f64> {
    match steps {
        1 => vec![from],
        _ => (0..steps)
            .map(|k| {
                if k + 1 == steps {
                    to
                } else {
                    from + (to - from) * k as f64 / (steps - 1) as f64
                }
            })
            .collect(),
    }
}

pub fn qbp(args: &QbpArgs) -> Result<u8, Failure> {
    let file = match &args.problem {
        Some(path) => {
            let loaded = read_problem(path)?;
            if loaded.file.states.len() != 2 {
                return Err(Failure::new(
                    1,
                    format!(
                        "{}: states: qbp takes exactly two states, found {}",
                        path.display(),
                        loaded.file.states.len()
                    ),
                ));
            }
            loaded.file
        }
        None => {
            let (Some(a), Some(b), Some(t)) = (&args.psi1, &args.psi2, args.t) else {
                return Err(Failure::new(1, "qbp needs --problem or --psi1, --psi2 and --t"));
            };
            let psi1 = parse_inline(a, "psi1")?;
            let psi2 = parse_inline(b, "psi2")?;
            ProblemFile {
                schema_version: SCHEMA_VERSION.into(),
                dimension: psi1.len(),
                states: vec![psi1, psi2],
                times: vec![0.0, t],
                seed: None,
                tolerances: None,
            }
        }
    };
    let loaded = files::load(file)?;
    let spec = &loaded.spec;
    let (psi1, psi2) = (&spec.states()[0], &spec.states()[1]);
    let t = spec.times()[1];
    let sol = solve_qbp(psi1, psi2, t).map_err(core_error)?;
    let cand = sol.candidate();
    let report = verify_hamiltonian(spec, &sol.hamiltonian).map_err(core_error)?;
    let cnorm = constraint_residual_norm(spec, &cand).map_err(core_error)?;
    // Zero energy leaves the closed-form multipliers undetermined; any
    // least-squares fit then serves.
    let stationarity = if sol.is_degenerate() {
        fit_multipliers(spec, &cand).map(|f| f.residual_norm)
    } else {
        qbp_kkt_point(&sol, spec).and_then(|p| kkt_residual_norm(spec, &p))
    }
    .map_err(core_error)?;

    let mut trajectory = Vec::with_capacity(args.samples);
    for tau in grid(0.0, t, args.samples) {
        let state = qbp_trajectory(&sol, tau);
        trajectory.push(TrajectorySample {
            tau,
            fidelity_initial: phase_invariant_fidelity(psi1, &state).map_err(core_error)?,
            fidelity_target: phase_invariant_fidelity(psi2, &state).map_err(core_error)?,
        });
    }

    let out = ResultFile {
        schema_version: SCHEMA_VERSION.into(),
        command: "qbp".into(),
        problem_hash: problem_hash(&loaded.file),
        status: if report.passed { SolveStatus::Converged } else { SolveStatus::Infeasible }
            .as_str()
            .into(),
        objective: objective(&cand),
        constraint_residual_norm: cnorm,
        stationarity_residual_norm: stationarity,
        spectrum: sol.hamiltonian.spectrum.clone(),
        weights: cand.weights.clone(),
        phases: cand.phases.clone(),
        hamiltonian: Some(matrix_to_rows(&sol.hamiltonian.matrix)),
        verification: Some(verification_table(&report)),
        analytic: Some(Analytic {
            epsilon: sol.epsilon,
            omega: sol.omega,
            overlap: sol.overlap,
            theta: sol.theta,
            time: sol.time,
        }),
        multistart: None,
        timing: Timing::default(),
        trajectory,
    };
    emit(args.out.as_deref(), &to_toml(&out)?)?;
    eprintln!("epsilon   {:.15}", sol.epsilon);
    eprintln!("objective {:.15}", out.objective);
    Ok(if report.passed { 0 } else { 2 })
}

pub fn verify(args: &VerifyArgs) -> Result<u8, Failure> {
    let problem = read_problem(&args.problem)?;
    let result = read_result(&args.result)?;
    if result.problem_hash != problem.hash {
        return Err(Failure::new(
            4,
            format!(
                "{} was produced from a different problem (hash {} vs {})",
                args.result.display(),
                result.problem_hash,
                problem.hash
            ),
        ));
    }
    let Some(rows) = &result.hamiltonian else {
        return Err(Failure::new(
            2,
            format!("{}: no hamiltonian to verify", args.result.display()),
        ));
    };
    let n = problem.spec.dimension();
    let h = rows_to_matrix(rows, n)?;
    let report = verify_matrix(&problem.spec, &h).map_err(core_error)?;
    println!("# index time fidelity deficit");
    for (i, (t, f)) in problem.spec.times().iter().zip(&report.fidelities).enumerate() {
        println!("{i} {t} {f:.15} {:.3e}", 1.0 - f);
    }
    println!("# trace {:.3e} hermiticity {:.3e}", report.trace, report.hermiticity_residual);
    if report.passed {
        eprintln!("PASS");
        Ok(0)
    } else {
        eprintln!("FAIL: min fidelity {:.15}", report.min_fidelity());
        Ok(2)
    }
}

fn range(args: &ScanArgs) -> Result<Vec<f64>, Failure> {
    let (Some(from), Some(to), Some(steps)) = (args.from, args.to, args.steps) else {
        return Err(Failure::new(1, "scan needs --from, --to and --steps"));
    };
    if !from.is_finite() || !to.is_finite() || steps == 0 || to < from || (steps == 1 && to != from)
    {
        return Err(Failure::new(
            1,
            format!("invalid range: from {from} to {to} in {steps} steps"),
        ));
    }
    Ok(grid(from, to, steps))
}

pub fn scan(args: &ScanArgs) -> Result<u8, Failure> {
    let mut text = String::new();
    match args.mode {
        ScanMode::QbpOverlap => {
            let overlaps = range(args)?;
            if overlaps.iter().any(|d| !(0.0..=1.0).contains(d)) {
                return Err(Failure::new(1, "invalid range: overlap must lie in [0, 1]"));
            }
            let psi1 = StateVector::basis(2, 0);
            text.push_str("overlap epsilon objective\n");
            for d in overlaps {
                let s = (1.0 - d * d).max(0.0).sqrt();
                let psi2 = checked_state(&[[d, 0.0], [s, 0.0]], "psi2")?;
                let sol = solve_qbp(&psi1, &psi2, args.t).map_err(core_error)?;
                let _ = writeln!(text, "{d} {} {}", sol.epsilon, sol.objective);
            }
        }
        ScanMode::Theta0 => {
            let (Some(n), Some(m)) = (args.n, args.m) else {
                return Err(Failure::new(1, "theta0 scan needs --n and --m"));
            };
            text.push_str("theta0 raw_objective regauged_objective\n");
            for theta0 in range(args)? {
                let seed = uniform_seed(n, m, args.t, theta0).map_err(core_error)?;
                let _ = writeln!(
                    text,
                    "{theta0} {} {}",
                    seed.raw_objective(),
                    seed.regauged_objective()
                );
            }
        }
        ScanMode::Multistart => {
            let Some(path) = &args.problem else {
                return Err(Failure::new(1, "multistart scan needs --problem"));
            };
            if args.starts.is_empty() || args.starts.contains(&0) {
                return Err(Failure::new(1, "invalid range: --starts needs positive counts"));
            }
            let problem = read_problem(path)?;
            let mut config = SolverConfig::default();
            if let Some(t) = &problem.file.tolerances {
                t.apply(&mut config);
            }
            if let Some(s) = args.seed.or(problem.file.seed) {
                config.rng_seed = s;
            }
            let least_squares = counting_report(&problem.spec).regime == Regime::Over;
            text.push_str("num_starts status objective constraint_residual_norm\n");
            for &k in &args.starts {
                config.num_starts = k;
                config.validate().map_err(core_error)?;
                let r = run_solver(&problem.spec, &config, least_squares)?;
                let _ = writeln!(
                    text,
                    "{k} {} {} {}",
                    status_code(reported_status(&r, &config, least_squares)),
                    r.objective_value,
                    r.constraint_residual_norm
                );
            }
        }
    }
    emit(args.out.as_deref(), &text)?;
    Ok(0)
}

pub fn seed_special(args: &SeedSpecialArgs) -> Result<u8, Failure> {
    let theta0 = args.theta0.unwrap_or_else(|| default_theta0(args.n));
    let seed = uniform_seed(args.n, args.m, args.t, theta0).map_err(core_error)?;
    let r = is_eoi_stationary_with(&seed, &SolverConfig::default());
    let mut text = String::new();
    let _ = writeln!(text, "n = {}", args.n);
    let _ = writeln!(text, "m = {}", args.m);
    let _ = writeln!(text, "t = {}", args.t);
    let _ = writeln!(text, "theta0 = {theta0}");
    let _ = writeln!(text, "verdict = \"{}\"", r.verdict.as_str());
    let _ = writeln!(text, "residual_norm = {:e}", r.residual_norm);
    let _ = writeln!(text, "rank = {}", r.rank);
    let _ = writeln!(text, "seed_objective = {}", r.seed_objective);
    let _ = writeln!(text, "regauged_objective = {}", seed.regauged_objective());
    if let Some(v) = r.solver_objective {
        let _ = writeln!(text, "solver_objective = {v}");
    }
    if let Some(s) = r.solver_status {
        let _ = writeln!(text, "solver_status = \"{}\"", s.as_str());
    }
    let _ = writeln!(text, "solver_improves = {}", r.solver_improves);
    let _ = writeln!(text, "assumes_zero_phases = {}", r.assumes_zero_phases);
    emit(args.out.as_deref(), &text)?;
    Ok(0)
}
