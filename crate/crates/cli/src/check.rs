use std::process::ExitCode;

use clap::Args;
use rcpo::gradcheck::{check_log_prob, check_loss, LOSS_TOLERANCE, POLICY_TOLERANCE};
use rcpo::{LossKind, SmoothingConfig};
use serde::Serialize;

use crate::output::{print_json, CliError};

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// A loss name, `log-prob` for the policy gradient, or `all`.
    #[arg(long)]
    loss: String,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
}

#[derive(Debug, Serialize)]
struct Target {
    name: String,
    tolerance: f64,
    max_error: f64,
    passed: bool,
    errors: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct Summary {
    trials: usize,
    seed: u64,
    gamma: f64,
    passed: bool,
    targets: Vec<Target>,
}

fn targets(name: &str) -> Result<Vec<Option<LossKind>>, CliError> {
    match name {
        "all" => Ok(LossKind::ALL.into_iter().map(Some).chain([None]).collect()),
        "log-prob" => Ok(vec![None]),
        hard if hard.starts_with("hard-") => Err(CliError::Usage(format!(
            "{hard}: the unsmoothed losses are piecewise constant in the rewards, so there is \
             no gradient to check; use the smoothed name {:?}",
            &hard["hard-".len()..]
        ))),
        other => Ok(vec![Some(other.parse::<LossKind>().map_err(|e| {
            CliError::Usage(format!("{e}, log-prob, all"))
        })?)]),
    }
}

pub fn run(args: GradcheckArgs, json: bool) -> Result<ExitCode, CliError> {
    if args.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let smooth = SmoothingConfig::new(args.gamma)?;
    let mut out = Vec::new();
    for target in targets(&args.loss)? {
        let (name, tolerance, errors) = match target {
            Some(kind) => (kind.name().to_owned(), LOSS_TOLERANCE, check_loss(kind, args.trials, args.seed, &smooth)?),
            None => ("log-prob".to_owned(), POLICY_TOLERANCE, check_log_prob(args.trials, args.seed)?),
        };
        let max_error = errors.iter().copied().fold(0.0, f64::max);
        let passed = errors.iter().all(|&e| e < tolerance);
        out.push(Target {
            name,
            tolerance,
            max_error,
            passed,
            errors,
        });
    }
    let summary = Summary {
        trials: args.trials,
        seed: args.seed,
        gamma: args.gamma,
        passed: out.iter().all(|t| t.passed),
        targets: out,
    };
    if json {
        print_json(&summary);
    } else {
        println!("{:<14} {:>6} {:>12} {:>10}", "target", "trial", "rel. error", "");
        for t in &summary.targets {
            for (i, e) in t.errors.iter().enumerate() {
                let mark = if *e < t.tolerance { "ok" } else { "FAIL" };
                println!("{:<14} {:>6} {:>12.3e} {:>10}", t.name, i, e, mark);
            }
        }
        for t in &summary.targets {
            println!(
                "{:<14} max {:.3e} (tolerance {:.0e}): {}",
                t.name,
                t.max_error,
                t.tolerance,
                if t.passed { "PASS" } else { "FAIL" }
            );
        }
    }
    Ok(if summary.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
