//! `qmpo` command-line tool.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "qmpo",
    version,
    about = "Block Lanczos solver for min tr(UᵀHU) + 2tr(UᵀG) s.t. UᵀU = I"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a problem instance as Matrix Market files.
    Gen(GenArgs),
    /// Solve an instance and write a JSON report.
    Solve(SolveArgs),
    /// Run several solvers on one instance and write a comparison CSV.
    Compare(CompareArgs),
    /// Certify the convergence bounds on a small synthetic instance.
    Verify(VerifyArgs),
    /// Sweep synthetic instances over a grid of sizes.
    Bench(BenchArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Synthetic,
    Olsr,
    Gcsed,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "synthetic")]
    kind: Kind,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    density: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Feature matrix (features × samples) for olsr/gcsed.
    #[arg(long)]
    data: Option<PathBuf>,
    /// One 1-based class label per sample.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    train_fraction: f64,
    /// Heat-kernel width.
    #[arg(long, default_value_t = 0.1)]
    t: f64,
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct ProblemArgs {
    /// Matrix Market file holding H.
    #[arg(long, conflicts_with = "gram")]
    h: Option<PathBuf>,
    /// Matrix Market file holding A, with H = AᵀA.
    #[arg(long)]
    gram: Option<PathBuf>,
    /// Matrix Market file holding G.
    #[arg(long)]
    g: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    #[arg(long, default_value_t = 1e-10)]
    eps_f: f64,
    #[arg(long, default_value_t = 1e-6)]
    eps_u: f64,
    #[arg(long, default_value_t = 1e-5)]
    eps_g: f64,
    /// Budget on Lanczos steps.
    #[arg(long, default_value_t = 1000)]
    kmax: usize,
    /// Reduced solve every this many Lanczos steps.
    #[arg(long, default_value_t = 5)]
    every: usize,
    /// Starts per reduced solve, the first being the warm start.
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// JSON report path; stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-checkpoint history as CSV.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, value_delimiter = ',', default_value = "lanczos,gpi")]
    solvers: Vec<String>,
    /// Instance name used in the CSV; defaults to the directory holding G.
    #[arg(long)]
    instance: Option<String>,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, default_value_t = 60)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    l: usize,
    #[arg(long, default_value_t = 0.05)]
    density: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random restarts of the dense oracle.
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    /// Certificate JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-checkpoint measured values and envelopes as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "1000,2000")]
    sizes: Vec<usize>,
    #[arg(long = "ls", value_delimiter = ',', default_value = "1,5,10")]
    ls: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.05")]
    densities: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "lanczos,gpi")]
    solvers: Vec<String>,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Solve(a) => commands::solve(a),
        Command::Compare(a) => commands::compare(a),
        Command::Verify(a) => commands::verify(a),
        Command::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_degenerate_input() { 2 } else { 1 })
        }
    }
}
