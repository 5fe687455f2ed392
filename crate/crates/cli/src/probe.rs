use std::path::PathBuf;
use std::process::ExitCode;

use clap::Args;
use rcpo::choice::{
    mnl_choice_prob, mnl_topk_prob, psi, rmj_choice_prob, rmj_rank_distance, rmj_topk_distance, rmj_topk_prob,
};
use rcpo::{Assortment, ItemId, MallowsRmjModel, TopKRanking, UtilityVector};
use serde::{Deserialize, Serialize};

use crate::output::{parse_list, print_json, CliError, ModelKind};

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long, value_enum)]
    model: ModelKind,
    /// MNL utilities, one per item id starting at 0.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "params")]
    utilities: Option<String>,
    /// Mallows-RMJ central ranking, best first.
    #[arg(long, conflicts_with = "params")]
    central: Option<String>,
    #[arg(long, conflicts_with = "params")]
    phi: Option<f64>,
    /// JSON file with `utilities` or `central_ranking` and `phi`, such as a gen manifest.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Item ids of the assortment.
    #[arg(long)]
    assortment: String,
    /// Top-k ranking to score instead of the per-item choice table.
    #[arg(long)]
    ranking: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ParamsFile {
    utilities: Option<Vec<f64>>,
    central_ranking: Option<Vec<ItemId>>,
    phi: Option<f64>,
}

enum Model {
    Mnl(UtilityVector),
    Rmj(MallowsRmjModel),
}

#[derive(Debug, Serialize)]
struct Row {
    item: ItemId,
    probability: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    distance: Option<usize>,
    normalizer: f64,
}

#[derive(Debug, Serialize)]
struct RankingRow {
    ranking: Vec<ItemId>,
    probability: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    distance: Option<usize>,
    normalizer: f64,
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
enum Table {
    Choice(Vec<Row>),
    Ranking(RankingRow),
}

#[derive(Debug, Serialize)]
struct ProbeReport {
    model: ModelKind,
    assortment: Vec<ItemId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    phi: Option<f64>,
    result: Table,
}

fn model(args: &ProbeArgs) -> Result<Model, CliError> {
    let (utilities, central, phi) = match &args.params {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            let p: ParamsFile = serde_json::from_str(&text)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            (p.utilities, p.central_ranking, p.phi)
        }
        None => (
            args.utilities.as_deref().map(|raw| parse_list::<f64>("--utilities", raw)).transpose()?,
            args.central
                .as_deref()
                .map(|raw| parse_list::<u32>("--central", raw).map(|v| v.into_iter().map(ItemId).collect()))
                .transpose()?,
            args.phi,
        ),
    };
    match args.model {
        ModelKind::Mnl => {
            let values = utilities.ok_or_else(|| CliError::Usage("--model mnl needs --utilities or --params".into()))?;
            Ok(Model::Mnl(UtilityVector::from_slice(&values)?))
        }
        ModelKind::Rmj => {
            let central = central.ok_or_else(|| CliError::Usage("--model rmj needs --central or --params".into()))?;
            let phi = phi.ok_or_else(|| CliError::Usage("--model rmj needs --phi".into()))?;
            Ok(Model::Rmj(MallowsRmjModel::new(central, phi)?))
        }
    }
}

fn choice_table(model: &Model, s: &Assortment) -> Result<Vec<Row>, CliError> {
    let rows = match model {
        Model::Mnl(nu) => {
            let z: f64 = s.items().iter().map(|&it| nu.get(it).map(f64::exp)).sum::<rcpo::Result<f64>>()?;
            s.items()
                .iter()
                .map(|&item| {
                    Ok(Row {
                        item,
                        probability: mnl_choice_prob(nu, s, item)?,
                        distance: None,
                        normalizer: z,
                    })
                })
                .collect::<rcpo::Result<Vec<_>>>()?
        }
        Model::Rmj(m) => {
            let z: f64 = (0..s.len()).map(|i| m.dispersion().powi(i as i32)).sum();
            s.items()
                .iter()
                .map(|&item| {
                    Ok(Row {
                        item,
                        probability: rmj_choice_prob(m, s, item)?,
                        distance: Some(rmj_rank_distance(m, s, item)?),
                        normalizer: z,
                    })
                })
                .collect::<rcpo::Result<Vec<_>>>()?
        }
    };
    Ok(rows)
}

fn ranking_row(model: &Model, s: &Assortment, mu: &TopKRanking) -> Result<RankingRow, CliError> {
    mu.validate_against(s)?;
    let row = match model {
        Model::Mnl(nu) => {
            // product of the sequential softmax denominators
            let mut remaining: Vec<ItemId> = s.items().to_vec();
            let mut z = 1.0;
            for &y in mu.items() {
                z *= remaining.iter().map(|&it| nu.get(it).map(f64::exp)).sum::<rcpo::Result<f64>>()?;
                remaining.retain(|&it| it != y);
            }
            RankingRow {
                ranking: mu.items().to_vec(),
                probability: mnl_topk_prob(nu, s, mu)?,
                distance: None,
                normalizer: z,
            }
        }
        Model::Rmj(m) => {
            let phi = m.dispersion();
            RankingRow {
                ranking: mu.items().to_vec(),
                probability: rmj_topk_prob(m, s, mu)?,
                distance: Some(rmj_topk_distance(m, s, mu)?),
                normalizer: psi(s.len(), phi)? / psi(s.len() - mu.k(), phi)?,
            }
        }
    };
    Ok(row)
}

pub fn run(args: ProbeArgs, json: bool) -> Result<ExitCode, CliError> {
    let model = model(&args)?;
    let s = Assortment::new(parse_list::<u32>("--assortment", &args.assortment)?.into_iter().map(ItemId).collect())?;
    let result = match &args.ranking {
        Some(raw) => {
            let mu = TopKRanking::new(parse_list::<u32>("--ranking", raw)?.into_iter().map(ItemId).collect())?;
            if mu.k() > s.len() {
                return Err(CliError::Usage(format!(
                    "ranking length {} exceeds assortment size {}",
                    mu.k(),
                    s.len()
                )));
            }
            Table::Ranking(ranking_row(&model, &s, &mu)?)
        }
        None => Table::Choice(choice_table(&model, &s)?),
    };
    let report = ProbeReport {
        model: args.model,
        assortment: s.items().to_vec(),
        phi: match &model {
            Model::Rmj(m) => Some(m.dispersion()),
            Model::Mnl(_) => None,
        },
        result,
    };
    if json {
        print_json(&report);
        return Ok(ExitCode::SUCCESS);
    }
    let fmt_d = |d: Option<usize>| d.map_or("-".to_owned(), |d| d.to_string());
    match &report.result {
        Table::Choice(rows) => {
            println!("{:>6} {:>20} {:>4} {:>20}", "item", "probability", "d", "normalizer");
            for r in rows {
                println!("{:>6} {:>20.15} {:>4} {:>20.15}", r.item.0, r.probability, fmt_d(r.distance), r.normalizer);
            }
        }
        Table::Ranking(r) => {
            let ranking: Vec<String> = r.ranking.iter().map(ToString::to_string).collect();
            println!("ranking     {}", ranking.join(" > "));
            println!("probability {:.15}", r.probability);
            println!("d           {}", fmt_d(r.distance));
            println!("normalizer  {:.15}", r.normalizer);
        }
    }
    Ok(ExitCode::SUCCESS)
}
