use std::path::PathBuf;
use std::process::ExitCode;

use clap::Args;
use rcpo::datagen::read_dataset;
use rcpo::estimation::{dataset_loss, train_rcpo, FitConfig, TrainReport, TrainSettings};
use rcpo::policy::{DispersionProxyConfig, ImplicitRewardConfig};
use rcpo::{LossKind, MarkovPolicy, SmoothingConfig};
use serde::Serialize;

use crate::output::{print_json, with_path, write_json, CliError};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// dpo, mnl-discrete, mnl-topk, rmj-pairwise, rmj-discrete or rmj-topk.
    #[arg(long)]
    loss: String,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    ref_policy: PathBuf,
    #[arg(long)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Dispersion for records that carry none.
    #[arg(long)]
    phi: Option<f64>,
    /// Do not fall back to the reference-policy entropy proxy for φ.
    #[arg(long)]
    no_proxy: bool,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stop early once the gradient ∞-norm drops below this.
    #[arg(long, default_value_t = 1e-12)]
    grad_tol: f64,
    #[arg(long)]
    out_policy: PathBuf,
    #[arg(long)]
    out_report: PathBuf,
}

#[derive(Debug, Serialize)]
struct Report<'a> {
    final_loss: f64,
    initial_loss: f64,
    data: String,
    ref_policy: String,
    out_policy: String,
    #[serde(flatten)]
    train: &'a TrainReport,
}

pub fn run(args: TrainArgs, json: bool) -> Result<ExitCode, CliError> {
    let loss: LossKind = args.loss.parse()?;
    if let Some(phi) = args.phi {
        rcpo::choice::check_dispersion(phi)?;
    }
    let settings = TrainSettings {
        loss,
        smoothing: SmoothingConfig::new(args.gamma)?,
        reward: ImplicitRewardConfig::new(args.beta)?,
        fit: FitConfig {
            learning_rate: args.lr,
            max_iters: args.iters,
            grad_tol: args.grad_tol,
            seed: args.seed,
            smoothing: SmoothingConfig::new(args.gamma)?,
        },
        fallback_phi: args.phi,
        proxy: (!args.no_proxy).then(DispersionProxyConfig::default),
    };
    settings.fit.validate()?;
    let reference = with_path(MarkovPolicy::load(&args.ref_policy), &args.ref_policy)?;
    let dataset = with_path(read_dataset(&args.data), &args.data)?;
    if dataset.is_empty() {
        return Err(CliError::Usage(format!("{}: dataset has no records", args.data.display())));
    }
    let mut theta = reference.clone();
    let train = train_rcpo(&mut theta, &reference, &dataset, &settings)?;
    with_path(theta.save(&args.out_policy), &args.out_policy)?;
    // re-evaluate from the file so the report matches what was written
    let saved = with_path(MarkovPolicy::load(&args.out_policy), &args.out_policy)?;
    let final_loss = dataset_loss(&saved, &reference, &dataset, &settings)?;
    let report = Report {
        final_loss,
        initial_loss: train.loss_trajectory[0],
        data: args.data.display().to_string(),
        ref_policy: args.ref_policy.display().to_string(),
        out_policy: args.out_policy.display().to_string(),
        train: &train,
    };
    write_json(&args.out_report, &report)?;
    if json {
        print_json(&report);
    } else {
        println!("loss           {}", loss);
        println!("initial loss   {:.10}", report.initial_loss);
        println!("final loss     {:.10}", final_loss);
        println!("iterations     {} (converged: {})", train.iterations, train.converged);
        println!("pair accuracy  {:.4}", train.final_pairwise_accuracy);
    }
    Ok(ExitCode::SUCCESS)
}
