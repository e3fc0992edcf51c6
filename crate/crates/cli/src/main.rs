use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cpapprox_cli::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "cpapprox",
    about = "State-preserving completely positive approximation experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON configuration file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for reports and tables (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Approximation target; repeatable for a ladder.
    #[arg(long = "eps")]
    eps: Vec<f64>,
    /// Dyadic grid level L (m = 2^L).
    #[arg(long)]
    level: Option<u32>,
    /// Pattern balance / family smoothness level L0.
    #[arg(long = "smooth-level")]
    smooth_level: Option<u32>,
    /// RNG seed; identical seeds give identical reports.
    #[arg(long)]
    seed: Option<u64>,
    /// Tolerance override NAME=VALUE; repeatable.
    #[arg(long = "tol")]
    tol: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Build state-preserving approximations of the identity over the eps
    /// ladder and verify their guarantees.
    Approximate(CommonArgs),
    /// Build the balanced-pattern state, certify the obstruction chain, and
    /// emit the defect trade-off scan as CSV.
    Counterexample(CommonArgs),
    /// Run the reduced property suite over every module.
    Selftest(CommonArgs),
}

fn build_config(args: &CommonArgs) -> anyhow::Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &args.out {
        config.out = Some(out.clone());
    }
    if !args.eps.is_empty() {
        config.eps = args.eps.clone();
    }
    if let Some(level) = args.level {
        config.level = Some(level);
    }
    if let Some(smooth) = args.smooth_level {
        config.smooth_level = Some(smooth);
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.parse_tol_overrides(&args.tol)?;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, result) = match &cli.command {
        Command::Approximate(args) => (
            "approximate",
            build_config(args).and_then(cpapprox_cli::run_approximate),
        ),
        Command::Counterexample(args) => (
            "counterexample",
            build_config(args).and_then(cpapprox_cli::run_counterexample),
        ),
        Command::Selftest(args) => (
            "selftest",
            build_config(args).and_then(cpapprox_cli::run_selftest),
        ),
    };
    let code = cpapprox_cli::exit_code(&result);
    match result {
        Ok(report) => {
            report.print_summary();
            if let Err(e) = report.write(report.config.out.as_deref()) {
                eprintln!("{name}: failed to write report: {e:#}");
                return ExitCode::from(cpapprox_cli::EXIT_PRECONDITION as u8);
            }
        }
        Err(e) => eprintln!("{name}: {e:#}"),
    }
    ExitCode::from(code as u8)
}
