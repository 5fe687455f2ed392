//! `rcpo`: generate ranked-choice data, fit choice models, train tabular
//! policies, check gradients and probe probabilities.
//!
//! Exit codes: 0 success, 1 a gradient check failed, 2 usage or validation
//! error, 3 unreadable or malformed input.

mod check;
mod fit;
mod gen;
mod output;
mod probe;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use output::CliError;

#[derive(Debug, Parser)]
#[command(name = "rcpo", version, about = "Ranked-choice preference optimization toolkit")]
struct Cli {
    /// Print a single JSON document on standard output.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic ranked-choice dataset plus a manifest.
    Gen(gen::GenArgs),
    /// Fit an MNL or Mallows-RMJ model to a dataset.
    Fit(fit::FitArgs),
    /// Train a policy against a frozen reference.
    Train(train::TrainArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(check::GradcheckArgs),
    /// Print choice probabilities for one assortment.
    Probe(probe::ProbeArgs),
    /// Write a random reference policy.
    InitPolicy(gen::InitPolicyArgs),
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("RCPO_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("RCPO_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the worker pool: {e}")))
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    configure_threads()?;
    let json = cli.json;
    match cli.command {
        Command::Gen(args) => gen::run(args, json),
        Command::Fit(args) => fit::run(args, json),
        Command::Train(args) => train::run(args, json),
        Command::Gradcheck(args) => check::run(args, json),
        Command::Probe(args) => probe::run(args, json),
        Command::InitPolicy(args) => gen::init_policy(args, json),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // clap exits 2 on usage errors and 0 for --help / --version
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
