//! `pairsurv`: randomization tests and sensitivity analyses for matched pairs
//! with censored survival outcomes.

mod commands;
mod config;
mod exit;
mod input;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Environment variable holding the default seed.
pub const SEED_ENV: &str = "PAIRSURV_SEED";
pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Parser)]
#[command(name = "pairsurv", version, about = "Matched-pair survival tests and sensitivity analysis")]
struct Cli {
    /// Worker threads for parallel work (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Master seed. Overrides the config file and PAIRSURV_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the full-precision result document (JSON) here.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Test of no effect up to a single time tau (or a log-rank / PW score test).
    Test(TestArgs),
    /// Max test over a grid of analysis times.
    Overall(OverallArgs),
    /// Worst-case p-values over Gamma, or the sensitivity value.
    Sens(SensArgs),
    /// Closed testing over the analysis times of a grid.
    Closed(ClosedArgs),
    /// Rejection-rate study from a config file (CSV output).
    Simulate(StudyArgs),
    /// Design sensitivities from a config file (CSV output).
    DesignSens(StudyArgs),
    /// Kaplan-Meier curves by arm (CSV output).
    Km(KmArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum MethodArg {
    Normal,
    Exact,
    Montecarlo,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum DirectionArg {
    /// Treated units survive longer.
    Benefit,
    Harm,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ScoreArg {
    Pseudo,
    Logrank,
    Pw,
}

#[derive(Debug, Args, Serialize)]
struct TestArgs {
    data: PathBuf,
    /// Analysis time (required for pseudo-observation scores).
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Normal)]
    method: MethodArg,
    /// Draws for --method montecarlo.
    #[arg(long, default_value_t = 100_000)]
    draws: u64,
    #[arg(long, value_enum, default_value_t = DirectionArg::Benefit)]
    direction: DirectionArg,
    #[arg(long, value_enum, default_value_t = ScoreArg::Pseudo)]
    score: ScoreArg,
    /// Print per-pair scores and differences.
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Debug, Args, Serialize)]
struct OverallArgs {
    data: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    grid: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Add the Prentice-Wilcoxon statistic as one more coordinate.
    #[arg(long)]
    include_ppw: bool,
    /// `normal` (multivariate normal) or `montecarlo`.
    #[arg(long, value_enum, default_value_t = MethodArg::Normal)]
    method: MethodArg,
    #[arg(long, default_value_t = 100_000)]
    draws: u64,
    #[arg(long, default_value_t = 1e-4)]
    mvn_tol: f64,
}

#[derive(Debug, Args, Serialize)]
#[command(group = clap::ArgGroup::new("target").required(true).args(["tau", "grid"]))]
#[command(group = clap::ArgGroup::new("mode").required(true).args(["gamma_grid", "search"]))]
struct SensArgs {
    data: PathBuf,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Evaluate the worst-case p-value at each of these Gammas.
    #[arg(long, value_delimiter = ',')]
    gamma_grid: Option<Vec<f64>>,
    /// Search for the smallest Gamma whose worst-case p-value exceeds alpha.
    #[arg(long)]
    search: bool,
    #[arg(long, default_value_t = 10.0)]
    gamma_max: f64,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    #[arg(long)]
    include_ppw: bool,
    /// Method for the single-tau test (`normal` or `exact`).
    #[arg(long, value_enum, default_value_t = MethodArg::Normal)]
    method: MethodArg,
    #[arg(long, default_value_t = 1e-4)]
    mvn_tol: f64,
}

#[derive(Debug, Args, Serialize)]
struct ClosedArgs {
    data: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    grid: Vec<f64>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-4)]
    mvn_tol: f64,
}

#[derive(Debug, Args, Serialize)]
struct StudyArgs {
    config: PathBuf,
    /// Override the number of replications (simulate) in the config.
    #[arg(long)]
    replications: Option<usize>,
    /// Write CSV here; the human-readable table then goes to stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct KmArgs {
    data: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn env_seed() -> anyhow::Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| {
            exit::Failure::new(exit::Kind::Config, format!("{SEED_ENV}=`{v}` is not an unsigned integer")).into()
        }),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(exit::Failure::new(exit::Kind::Config, "--threads must be >= 1").into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let ctx = commands::Context {
        seed_flag: cli.seed,
        env_seed: env_seed()?,
        out: cli.out,
        threads: cli.threads,
    };
    match cli.command {
        Command::Test(a) => commands::test(&ctx, a),
        Command::Overall(a) => commands::overall(&ctx, a),
        Command::Sens(a) => commands::sens(&ctx, a),
        Command::Closed(a) => commands::closed(&ctx, a),
        Command::Simulate(a) => commands::simulate(&ctx, a),
        Command::DesignSens(a) => commands::design_sens(&ctx, a),
        Command::Km(a) => commands::km(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::exit_code(&e))
        }
    }
}
