//! Seeded synthetic data: ranked-choice samplers for both model families,
//! Markov-policy response sampling and the JSONL dataset codec.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::Deserializer;
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::choice::{
    check_dispersion, enumerate_topk, gumbel, rmj_topk_prob, Assortment, ItemId, MallowsRmjModel,
    TopKRanking, UtilityVector,
};
use crate::error::{RcpoError, Result};
use crate::losses::{Observation, PromptId, TopKObservation};
use crate::numeric::score_desc;
use crate::policy::{MarkovPolicy, ResponseSequence, RowId, TokenId};

/// Random stream for record `index`, independent of every other record.
pub fn record_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn check_k(s: &Assortment, k: usize) -> Result<()> {
    if k == 0 || k > s.len() {
        return Err(RcpoError::InvalidArgument(format!(
            "k = {k} must lie in 1..={} (assortment size)",
            s.len()
        )));
    }
    Ok(())
}

/// Plackett-Luce top-k draw by Gumbel-max: perturb, sort descending, truncate.
pub fn sample_pl_topk<R: Rng + ?Sized>(
    nu: &UtilityVector,
    s: &Assortment,
    k: usize,
    rng: &mut R,
) -> Result<TopKRanking> {
    check_k(s, k)?;
    let mut perturbed: Vec<(f64, ItemId)> = s
        .items()
        .iter()
        .map(|&it| nu.get(it).map(|v| (v + gumbel(rng), it)))
        .collect::<Result<_>>()?;
    perturbed.sort_by(|a, b| score_desc(*a, *b));
    TopKRanking::new(perturbed.into_iter().take(k).map(|(_, it)| it).collect())
}

/// Exact Mallows-RMJ top-k draw: categorical over every ordered k-list of `s`
/// with the closed-form probabilities as weights.
pub fn sample_rmj_topk<R: Rng + ?Sized>(
    model: &MallowsRmjModel,
    s: &Assortment,
    k: usize,
    rng: &mut R,
) -> Result<TopKRanking> {
    check_k(s, k)?;
    let lists = enumerate_topk(s, k)?;
    let weights: Vec<f64> = lists
        .iter()
        .map(|mu| rmj_topk_prob(model, s, mu))
        .collect::<Result<_>>()?;
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (mu, w) in lists.iter().zip(&weights) {
        acc += w;
        if u < acc {
            return Ok(mu.clone());
        }
    }
    Ok(lists.last().expect("non-empty enumeration").clone())
}

/// Responses drawn for one prompt; `duplicates` flags that distinctness could
/// not be reached within the retry budget.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledResponses {
    pub responses: Vec<ResponseSequence>,
    pub duplicates: bool,
}

const DISTINCT_RETRIES: usize = 64;

fn sample_token<R: Rng + ?Sized>(logits: &[f64], rng: &mut R) -> TokenId {
    let probs = crate::numeric::softmax(logits);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (t, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return t as TokenId;
        }
    }
    (probs.len() - 1) as TokenId
}

/// Ancestral sampling of one fixed-length response.
pub fn sample_response<R: Rng + ?Sized>(
    policy: &MarkovPolicy,
    prompt: &PromptId,
    length: usize,
    rng: &mut R,
) -> Result<ResponseSequence> {
    if length == 0 {
        return Err(RcpoError::InvalidArgument("response length must be at least 1".into()));
    }
    let mut tokens = Vec::with_capacity(length);
    let mut row = RowId::Start;
    for _ in 0..length {
        let t = sample_token(policy.row(prompt, row)?, rng);
        tokens.push(t);
        row = RowId::After(t);
    }
    ResponseSequence::new(tokens)
}

/// `m` responses of length `length`, retrying duplicates a bounded number of
/// times before accepting them.
pub fn sample_responses<R: Rng + ?Sized>(
    policy: &MarkovPolicy,
    prompt: &PromptId,
    m: usize,
    length: usize,
    rng: &mut R,
) -> Result<SampledResponses> {
    if m < 2 {
        return Err(RcpoError::InvalidArgument(format!("need at least 2 responses, got {m}")));
    }
    let mut seen = BTreeSet::new();
    let mut responses = Vec::with_capacity(m);
    let mut duplicates = false;
    while responses.len() < m {
        let mut y = sample_response(policy, prompt, length, rng)?;
        let mut tries = 0;
        while seen.contains(&y) && tries < DISTINCT_RETRIES {
            y = sample_response(policy, prompt, length, rng)?;
            tries += 1;
        }
        if !seen.insert(y.clone()) {
            duplicates = true;
        }
        responses.push(y);
    }
    if duplicates {
        log::warn!("prompt {prompt}: could not draw {m} distinct responses");
    }
    Ok(SampledResponses {
        responses,
        duplicates,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseRecord {
    pub item_id: ItemId,
    pub tokens: Vec<TokenId>,
}

fn serialize_dispersion<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        None => s.serialize_none(),
        Some(x) => {
            // 17 significant digits round-trip every f64 exactly
            let raw = serde_json::value::RawValue::from_string(format!("{x:.16e}"))
                .map_err(serde::ser::Error::custom)?;
            raw.serialize(s)
        }
    }
}

fn deserialize_dispersion<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
    Option::<f64>::deserialize(d)
}

/// One line of a dataset file: a prompt, its candidate responses, the
/// assortment shown and the observed top-k ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub prompt_id: PromptId,
    pub items: Vec<ResponseRecord>,
    pub assortment: Vec<ItemId>,
    pub ranking: Vec<ItemId>,
    #[serde(serialize_with = "serialize_dispersion", deserialize_with = "deserialize_dispersion")]
    pub dispersion: Option<f64>,
}

impl DatasetRecord {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let mut ids = BTreeSet::new();
        for r in &self.items {
            if !ids.insert(r.item_id) {
                return Err(format!("item {} listed twice", r.item_id));
            }
            if r.tokens.is_empty() {
                return Err(format!("item {} has an empty token sequence", r.item_id));
            }
        }
        let s = Assortment::new(self.assortment.clone()).map_err(|e| e.to_string())?;
        if let Some(missing) = s.items().iter().find(|it| !ids.contains(it)) {
            return Err(format!("assortment item {missing} has no response"));
        }
        let mu = TopKRanking::new(self.ranking.clone()).map_err(|e| e.to_string())?;
        mu.validate_against(&s).map_err(|e| e.to_string())?;
        if let Some(phi) = self.dispersion {
            check_dispersion(phi).map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    pub fn assortment(&self) -> Result<Assortment> {
        Assortment::new(self.assortment.clone())
    }

    pub fn ranking(&self) -> Result<TopKRanking> {
        TopKRanking::new(self.ranking.clone())
    }

    pub fn observation(&self) -> Result<Observation> {
        Ok(Observation::TopK(self.topk_observation()?))
    }

    pub fn topk_observation(&self) -> Result<TopKObservation> {
        TopKObservation::new(
            self.prompt_id.clone(),
            self.assortment()?,
            self.ranking()?,
            self.dispersion,
        )
    }

    pub fn response(&self, item: ItemId) -> Result<ResponseSequence> {
        let r = self
            .items
            .iter()
            .find(|r| r.item_id == item)
            .ok_or(RcpoError::ItemNotInAssortment(item))?;
        ResponseSequence::new(r.tokens.clone())
    }
}

/// Ground-truth model behind a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum GroundTruth {
    Mnl(UtilityVector),
    Rmj(MallowsRmjModel),
}

/// Where record token sequences come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ResponseSource {
    /// Item `i` is the one-token response `[i]`.
    Placeholder,
    /// Per-prompt response lists, indexed by item id.
    Bank(BTreeMap<PromptId, Vec<ResponseSequence>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub truth: GroundTruth,
    pub universe: Vec<ItemId>,
    pub assortment_size: usize,
    pub k: usize,
    pub count: usize,
    pub seed: u64,
    pub prompts: Vec<PromptId>,
    pub responses: ResponseSource,
    /// Copy the ground-truth dispersion into each record (Mallows only).
    pub emit_dispersion: bool,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.universe.len();
        if self.assortment_size < 1 || self.assortment_size > n {
            return Err(RcpoError::InvalidArgument(format!(
                "assortment-size {} must lie in 1..={n} (universe size)",
                self.assortment_size
            )));
        }
        if self.k < 1 || self.k > self.assortment_size {
            return Err(RcpoError::InvalidArgument(format!(
                "k {} must lie in 1..={} (assortment-size)",
                self.k, self.assortment_size
            )));
        }
        if self.prompts.is_empty() {
            return Err(RcpoError::InvalidArgument("at least one prompt is required".into()));
        }
        if let GroundTruth::Rmj(model) = &self.truth {
            if self.assortment_size > crate::choice::ENUMERATION_CAP {
                return Err(RcpoError::AssortmentTooLarge {
                    size: self.assortment_size,
                    cap: crate::choice::ENUMERATION_CAP,
                });
            }
            for &it in &self.universe {
                model.position(it)?;
            }
        }
        if let GroundTruth::Mnl(nu) = &self.truth {
            for &it in &self.universe {
                nu.get(it)?;
            }
        }
        if let ResponseSource::Bank(bank) = &self.responses {
            for p in &self.prompts {
                let list = bank
                    .get(p)
                    .ok_or_else(|| RcpoError::UnknownPrompt(p.0.clone()))?;
                if let Some(it) = self.universe.iter().find(|it| it.0 as usize >= list.len()) {
                    return Err(RcpoError::InvalidArgument(format!(
                        "prompt {p} has no response for item {it}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Generates `cfg.count` records; record `i` uses prompt `i mod P` and its own
/// random stream, so records can be produced in any order.
pub fn generate(cfg: &GeneratorConfig) -> Result<Vec<DatasetRecord>> {
    cfg.validate()?;
    (0..cfg.count).map(|i| generate_record(cfg, i)).collect()
}

fn generate_record(cfg: &GeneratorConfig, index: usize) -> Result<DatasetRecord> {
    let mut rng = record_rng(cfg.seed, index as u64);
    let prompt = cfg.prompts[index % cfg.prompts.len()].clone();
    let mut picked: Vec<ItemId> = sample_indices(&mut rng, cfg.universe.len(), cfg.assortment_size)
        .into_iter()
        .map(|i| cfg.universe[i])
        .collect();
    picked.sort();
    let s = Assortment::new(picked)?;
    let (ranking, dispersion) = match &cfg.truth {
        GroundTruth::Mnl(nu) => (sample_pl_topk(nu, &s, cfg.k, &mut rng)?, None),
        GroundTruth::Rmj(model) => (
            sample_rmj_topk(model, &s, cfg.k, &mut rng)?,
            cfg.emit_dispersion.then(|| model.dispersion()),
        ),
    };
    let items = s
        .items()
        .iter()
        .map(|&it| {
            let tokens = match &cfg.responses {
                ResponseSource::Placeholder => vec![it.0],
                ResponseSource::Bank(bank) => bank[&prompt][it.0 as usize].tokens().to_vec(),
            };
            ResponseRecord { item_id: it, tokens }
        })
        .collect();
    Ok(DatasetRecord {
        prompt_id: prompt,
        items,
        assortment: s.items().to_vec(),
        ranking: ranking.items().to_vec(),
        dispersion,
    })
}

/// Serializes records as JSONL: one compact object per line.
pub fn to_jsonl<W: Write>(records: &[DatasetRecord], mut out: W) -> Result<()> {
    for (index, r) in records.iter().enumerate() {
        r.validate().map_err(|message| RcpoError::InvalidRecord {
            index,
            line: index + 1,
            message,
        })?;
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn from_jsonl<R: BufRead>(input: R) -> Result<Vec<DatasetRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let record: DatasetRecord =
            serde_json::from_str(&line).map_err(|e| RcpoError::MalformedLine {
                line: line_no,
                message: e.to_string(),
            })?;
        record.validate().map_err(|message| RcpoError::InvalidRecord {
            index: out.len(),
            line: line_no,
            message,
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_dataset(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    let file = fs::File::create(path)?;
    to_jsonl(records, BufWriter::new(file))
}

pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>> {
    let file = fs::File::open(path)?;
    from_jsonl(BufReader::new(file))
}
