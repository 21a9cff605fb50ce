//! `lapden`: denoise CSV signals and PGM images with the fourth-order filter
//! or the TV baseline, and regenerate the experiment figures.
//!
//! Exit codes: 0 on success, 2 on bad parameters or input, 3 on divergence.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lapden::nl_filter::{Solver, TimeStep};

#[derive(Parser, Debug)]
#[command(name = "lapden", version, about = "Fourth-order nonlinear Laplacian denoising")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Restore a 1D CSV signal with the nonlinear filter.
    Denoise1d(FilterArgs),
    /// Restore a PGM image with the nonlinear filter.
    Denoise2d(Filter2dArgs),
    /// Restore a 1D CSV signal with TV.
    Tv1d(TvArgs),
    /// Restore a PGM image with TV.
    Tv2d(TvArgs),
    /// Regenerate one of the experiment figures.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug, Clone)]
struct IoArgs {
    /// Input signal (CSV) or image (PGM).
    #[arg(long)]
    input: PathBuf,
    /// Where to write the restored data.
    #[arg(long)]
    output: PathBuf,
    /// Time step, a positive number or `auto`.
    #[arg(long, default_value = "auto", value_parser = parse_dt)]
    dt: TimeStep,
    #[arg(long, default_value_t = 200_000)]
    iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Grid spacing; overrides the CSV header. Images default to 1.
    #[arg(long)]
    spacing: Option<f64>,
    /// SVG plot of noisy and restored data.
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Append a JSON-lines report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Clean reference; enables metrics in the report.
    #[arg(long)]
    clean: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SolverArg {
    Explicit,
    SemiImplicit,
}

impl From<SolverArg> for Solver {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Explicit => Solver::ExplicitEuler,
            SolverArg::SemiImplicit => Solver::SemiImplicit,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct FilterArgs {
    #[command(flatten)]
    io: IoArgs,
    /// Fixed fidelity weight.
    #[arg(long, conflicts_with = "delta")]
    lambda: Option<f64>,
    /// Noise level; the fidelity weight is then adapted to match it.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 1e-2)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, value_enum, default_value = "explicit")]
    solver: SolverArg,
}

#[derive(Args, Debug, Clone)]
struct Filter2dArgs {
    #[command(flatten)]
    filter: FilterArgs,
    /// Initial state instead of the noisy image.
    #[arg(long)]
    warm_start: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct TvArgs {
    #[command(flatten)]
    io: IoArgs,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1e-6)]
    beta: f64,
}

#[derive(Args, Debug, Clone)]
struct ExperimentArgs {
    /// fig1, fig2, fig3, fig4 or fig5.
    name: String,
    #[arg(long, default_value_t = lapden::experiment::DEFAULT_SEED)]
    seed: u64,
    /// Intervals in 1D (default 100) or nodes per side in 2D (default 64).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value = "out")]
    outdir: PathBuf,
}

fn parse_dt(s: &str) -> Result<TimeStep, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(TimeStep::Auto);
    }
    match s.parse::<f64>() {
        Ok(dt) if dt > 0.0 && dt.is_finite() => Ok(TimeStep::Fixed(dt)),
        _ => Err(format!("expected a positive number or `auto`, got {s:?}")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // clap exits with 2 on usage errors and 0 for --help
        Err(e) => e.exit(),
    };
    let threads = lapden::parallel::threads_from_env();
    let result = match cli.command {
        Command::Denoise1d(a) => commands::denoise1d(&a, threads),
        Command::Denoise2d(a) => commands::denoise2d(&a, threads),
        Command::Tv1d(a) => commands::tv1d(&a, threads),
        Command::Tv2d(a) => commands::tv2d(&a, threads),
        Command::Experiment(a) => commands::experiment(&a, threads),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lapden: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
