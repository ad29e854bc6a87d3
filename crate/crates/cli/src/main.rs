//! `eoi`: command-line front end for the energy-optimal interpolation solver.
//!
//! Exit codes: 0 success or CONVERGED, 1 malformed input, 2 INFEASIBLE or a
//! failed verification, 3 MAX_ITERS, 4 result/problem hash mismatch.

mod commands;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

#[derive(Parser)]
#[command(name = "eoi", version, about = "Energy-optimal time-independent Hamiltonians through target states")]
struct Cli {
    /// Worker threads for multistart (0: one per logical processor).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem file and write a result file.
    Solve(SolveArgs),
    /// Closed-form two-state solution with trajectory samples.
    Qbp(QbpArgs),
    /// Re-check a result file against its problem by direct evolution.
    Verify(VerifyArgs),
    /// Emit columnar data over a parameter range.
    Scan(ScanArgs),
    /// Stationarity check of the uniform-spectrum candidate.
    SeedSpecial(SeedSpecialArgs),
}

#[derive(Args)]
pub struct SolveArgs {
    pub problem: PathBuf,
    #[arg(long)]
    pub tol_constraint: Option<f64>,
    #[arg(long)]
    pub tol_stationarity: Option<f64>,
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub rank_hint: Option<usize>,
    /// Minimize the regularized constraint residual instead; required for
    /// overdetermined problems.
    #[arg(long)]
    pub least_squares: bool,
    /// Output path (default: `<problem stem>.result.toml` beside the problem).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct QbpArgs {
    /// Problem file holding exactly two states.
    #[arg(long, conflicts_with_all = ["psi1", "psi2", "t"])]
    pub problem: Option<PathBuf>,
    /// Initial state as a TOML array of [re, im] pairs.
    #[arg(long, requires_all = ["psi2", "t"])]
    pub psi1: Option<String>,
    #[arg(long, requires_all = ["psi1", "t"])]
    pub psi2: Option<String>,
    #[arg(long)]
    pub t: Option<f64>,
    /// Number of evenly spaced trajectory samples over [0, t].
    #[arg(long, default_value_t = 0)]
    pub samples: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct VerifyArgs {
    pub problem: PathBuf,
    pub result: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ScanMode {
    /// Objective against the overlap modulus of a two-state problem.
    QbpOverlap,
    /// Uniform-seed objectives against the offset angle.
    Theta0,
    /// Best objective against the number of starts.
    Multistart,
}

#[derive(Args)]
pub struct ScanArgs {
    #[arg(long, value_enum)]
    pub mode: ScanMode,
    #[arg(long, allow_hyphen_values = true)]
    pub from: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub to: Option<f64>,
    /// Number of points, both ends included.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    /// Problem file for the multistart scan.
    #[arg(long)]
    pub problem: Option<PathBuf>,
    /// Comma-separated start counts for the multistart scan.
    #[arg(long, value_delimiter = ',')]
    pub starts: Vec<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SeedSpecialArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    /// Offset angle (default: pi / n).
    #[arg(long, allow_hyphen_values = true)]
    pub theta0: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EOI_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            log::warn!("thread pool: {e}");
        }
    }
    let outcome = match cli.command {
        Command::Solve(a) => commands::solve(&a),
        Command::Qbp(a) => commands::qbp(&a),
        Command::Verify(a) => commands::verify(&a),
        Command::Scan(a) => commands::scan(&a),
        Command::SeedSpecial(a) => commands::seed_special(&a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
