use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rcpo::datagen::{generate, sample_responses, write_dataset, GeneratorConfig, GroundTruth, ResponseSource};
use rcpo::policy::Vocab;
use rcpo::{ItemId, MallowsRmjModel, MarkovPolicy, PromptId, UtilityVector};
use serde::Serialize;

use crate::output::{parse_list, print_json, with_path, write_json, CliError, ModelKind};

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    model: ModelKind,
    /// Universe size; items are numbered 0..N.
    #[arg(long)]
    items: u32,
    #[arg(long)]
    assortment_size: usize,
    /// Length of each recorded ranking.
    #[arg(long)]
    k: usize,
    /// Number of records.
    #[arg(long)]
    count: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Manifest path (default: `<out>.manifest.json`).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// MNL utilities, comma-separated, one per item (default: evenly spaced,
    /// item 0 best).
    #[arg(long, allow_hyphen_values = true)]
    utilities: Option<String>,
    /// Mallows-RMJ central ranking, best first (default: 0,1,..,N-1).
    #[arg(long)]
    central: Option<String>,
    /// Mallows-RMJ dispersion.
    #[arg(long, default_value_t = 0.5)]
    phi: f64,
    /// Store the ground-truth dispersion in each record (rmj only).
    #[arg(long)]
    emit_dispersion: bool,
    /// Number of prompts when responses are placeholders.
    #[arg(long, default_value_t = 1)]
    prompts: usize,
    /// Sample real token responses from this policy, one prompt per policy prompt.
    #[arg(long)]
    ref_policy: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    response_length: usize,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    model: ModelKind,
    items: u32,
    assortment_size: usize,
    k: usize,
    count: usize,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    utilities: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    central_ranking: Option<Vec<ItemId>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    phi: Option<f64>,
    emit_dispersion: bool,
    prompts: &'a [PromptId],
    ref_policy: Option<String>,
    response_length: Option<usize>,
    dataset: String,
}

/// Ground truth plus the utilities or central ranking to echo in the manifest.
type Truth = (GroundTruth, Option<Vec<f64>>, Option<Vec<ItemId>>);

fn truth(args: &GenArgs) -> Result<Truth, CliError> {
    let n = args.items;
    if n == 0 {
        return Err(CliError::Usage("--items must be at least 1".into()));
    }
    match args.model {
        ModelKind::Mnl => {
            if args.central.is_some() {
                return Err(CliError::Usage("--central applies to --model rmj only".into()));
            }
            let values = match &args.utilities {
                Some(raw) => parse_list::<f64>("--utilities", raw)?,
                None => (0..n).map(|i| (n as f64 - 1.0) / 2.0 - i as f64).collect(),
            };
            if values.len() != n as usize {
                return Err(CliError::Usage(format!(
                    "--utilities lists {} values but --items is {n}",
                    values.len()
                )));
            }
            let nu = UtilityVector::from_slice(&values)?;
            Ok((GroundTruth::Mnl(nu), Some(values), None))
        }
        ModelKind::Rmj => {
            if args.utilities.is_some() {
                return Err(CliError::Usage("--utilities applies to --model mnl only".into()));
            }
            let central: Vec<ItemId> = match &args.central {
                Some(raw) => parse_list::<u32>("--central", raw)?.into_iter().map(ItemId).collect(),
                None => (0..n).map(ItemId).collect(),
            };
            let mut sorted = central.clone();
            sorted.sort();
            if sorted != (0..n).map(ItemId).collect::<Vec<_>>() {
                return Err(CliError::Usage(format!(
                    "--central must be a permutation of 0..{}",
                    n - 1
                )));
            }
            let model = MallowsRmjModel::new(central.clone(), args.phi)?;
            Ok((GroundTruth::Rmj(model), None, Some(central)))
        }
    }
}

pub fn run(args: GenArgs, json: bool) -> Result<ExitCode, CliError> {
    let (truth, utilities, central) = truth(&args)?;
    if args.emit_dispersion && args.model == ModelKind::Mnl {
        return Err(CliError::Usage("--emit-dispersion applies to --model rmj only".into()));
    }
    let (prompts, responses) = match &args.ref_policy {
        Some(path) => {
            let policy = with_path(MarkovPolicy::load(path), path)?;
            let prompts: Vec<PromptId> = policy.prompt_ids().cloned().collect();
            // one stream for the whole response bank, separate from record streams
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            rng.set_stream(u64::MAX);
            let mut bank = BTreeMap::new();
            for p in &prompts {
                let drawn = sample_responses(&policy, p, args.items.max(2) as usize, args.response_length, &mut rng)?;
                bank.insert(p.clone(), drawn.responses);
            }
            (prompts, ResponseSource::Bank(bank))
        }
        None => {
            if args.prompts == 0 {
                return Err(CliError::Usage("--prompts must be at least 1".into()));
            }
            let prompts = (0..args.prompts).map(|i| PromptId(format!("prompt-{i}"))).collect();
            (prompts, ResponseSource::Placeholder)
        }
    };
    let cfg = GeneratorConfig {
        truth,
        universe: (0..args.items).map(ItemId).collect(),
        assortment_size: args.assortment_size,
        k: args.k,
        count: args.count,
        seed: args.seed,
        prompts: prompts.clone(),
        responses,
        emit_dispersion: args.emit_dispersion,
    };
    let records = generate(&cfg)?;
    with_path(write_dataset(&args.out, &records), &args.out)?;
    let manifest_path = args
        .manifest
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.manifest.json", args.out.display())));
    let manifest = Manifest {
        model: args.model,
        items: args.items,
        assortment_size: args.assortment_size,
        k: args.k,
        count: args.count,
        seed: args.seed,
        utilities,
        central_ranking: central,
        phi: (args.model == ModelKind::Rmj).then_some(args.phi),
        emit_dispersion: args.emit_dispersion,
        prompts: &prompts,
        ref_policy: args.ref_policy.as_ref().map(|p| p.display().to_string()),
        response_length: args.ref_policy.as_ref().map(|_| args.response_length),
        dataset: args.out.display().to_string(),
    };
    write_json(&manifest_path, &manifest)?;
    if json {
        print_json(&serde_json::json!({
            "records": records.len(),
            "dataset": args.out.display().to_string(),
            "manifest": manifest_path.display().to_string(),
        }));
    } else {
        println!(
            "wrote {} records to {} (manifest {})",
            records.len(),
            args.out.display(),
            manifest_path.display()
        );
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Args)]
pub struct InitPolicyArgs {
    #[arg(long)]
    vocab: usize,
    /// Number of prompts, named prompt-0, prompt-1, ...
    #[arg(long, default_value_t = 1)]
    prompts: usize,
    /// Logits are drawn uniformly from [-scale, scale]; 0 gives a uniform policy.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

pub fn init_policy(args: InitPolicyArgs, json: bool) -> Result<ExitCode, CliError> {
    if args.prompts == 0 {
        return Err(CliError::Usage("--prompts must be at least 1".into()));
    }
    if !(args.scale >= 0.0 && args.scale.is_finite()) {
        return Err(CliError::Usage(format!("--scale must be non-negative, got {}", args.scale)));
    }
    let vocab = Vocab::new(args.vocab)?;
    let prompts: Vec<PromptId> = (0..args.prompts).map(|i| PromptId(format!("prompt-{i}"))).collect();
    let policy = if args.scale == 0.0 {
        MarkovPolicy::uniform(vocab, &prompts)
    } else {
        MarkovPolicy::random(vocab, &prompts, args.scale, &mut ChaCha8Rng::seed_from_u64(args.seed))
    };
    with_path(policy.save(&args.out), &args.out)?;
    if json {
        print_json(&serde_json::json!({
            "policy": args.out.display().to_string(),
            "vocab_size": args.vocab,
            "prompts": prompts,
        }));
    } else {
        println!("wrote policy with {} prompts, vocab {} to {}", args.prompts, args.vocab, args.out.display());
    }
    Ok(ExitCode::SUCCESS)
}
