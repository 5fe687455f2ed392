use std::path::PathBuf;
use std::process::ExitCode;

use clap::Args;
use rcpo::datagen::read_dataset;
use rcpo::estimation::{fit_mnl_mle, fit_rmj_mle, observations_of, ranking_by_utility, universe_of, FitConfig};
use rcpo::{ItemId, SmoothingConfig};
use serde::Serialize;

use crate::output::{print_json, with_path, write_json, CliError, ModelKind};

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, value_enum)]
    model: ModelKind,
    #[arg(long)]
    data: PathBuf,
    /// Report path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    lr: f64,
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    grad_tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sigmoid slope of the ranking surrogate (rmj only).
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
}

#[derive(Debug, Serialize)]
struct FitReport {
    model: ModelKind,
    data: String,
    records: usize,
    universe: Vec<ItemId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    utilities: Option<rcpo::UtilityVector>,
    central_ranking: Vec<ItemId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    boundary_hit: Option<bool>,
    log_likelihood: f64,
    converged: bool,
    iterations: usize,
    config: FitConfig,
}

pub fn run(args: FitArgs, json: bool) -> Result<ExitCode, CliError> {
    let cfg = FitConfig {
        learning_rate: args.lr,
        max_iters: args.max_iters,
        grad_tol: args.grad_tol,
        seed: args.seed,
        smoothing: SmoothingConfig::new(args.gamma)?,
    };
    cfg.validate()?;
    let dataset = with_path(read_dataset(&args.data), &args.data)?;
    if dataset.is_empty() {
        return Err(CliError::Usage(format!("{}: dataset has no records", args.data.display())));
    }
    let observations = with_path(observations_of(&dataset), &args.data)?;
    let universe = universe_of(&observations);
    let report = match args.model {
        ModelKind::Mnl => {
            let fit = fit_mnl_mle(&observations, &universe, &cfg)?;
            FitReport {
                model: args.model,
                data: args.data.display().to_string(),
                records: dataset.len(),
                universe,
                central_ranking: ranking_by_utility(&fit.utilities),
                utilities: Some(fit.utilities),
                phi: None,
                boundary_hit: None,
                log_likelihood: fit.log_likelihood,
                converged: fit.converged,
                iterations: fit.iterations,
                config: cfg,
            }
        }
        ModelKind::Rmj => {
            let fit = fit_rmj_mle(&observations, &universe, &cfg)?;
            FitReport {
                model: args.model,
                data: args.data.display().to_string(),
                records: dataset.len(),
                universe,
                utilities: None,
                central_ranking: fit.central_ranking,
                phi: Some(fit.phi_hat),
                boundary_hit: Some(fit.boundary_hit),
                log_likelihood: fit.log_likelihood,
                converged: fit.converged,
                iterations: fit.iterations,
                config: cfg,
            }
        }
    };
    write_json(&args.out, &report)?;
    if json {
        print_json(&report);
    } else {
        let ranking: Vec<String> = report.central_ranking.iter().map(ToString::to_string).collect();
        println!("ranking        {}", ranking.join(" > "));
        if let Some(nu) = &report.utilities {
            for (it, v) in nu.iter() {
                println!("utility[{it}]     {v:.6}");
            }
        }
        if let Some(phi) = report.phi {
            println!("phi            {phi:.6}");
        }
        println!("log-likelihood {:.6}", report.log_likelihood);
        println!("converged      {} after {} iterations", report.converged, report.iterations);
    }
    Ok(ExitCode::SUCCESS)
}
