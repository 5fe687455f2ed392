//! Per-prompt first-order Markov token policy.
//!
//! Each prompt owns a start row (logits over the first token) and a dense
//! `V×V` transition table. Responses are complete token lists supplied from
//! outside; there is no end token, so `log π(y|x)` is the start term plus one
//! transition term per adjacent token pair.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{RcpoError, Result};
use crate::losses::PromptId;
use crate::numeric::{log_sum_exp, softmax};

pub type TokenId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vocab(usize);

impl Vocab {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(RcpoError::InvalidArgument(format!(
                "vocabulary needs at least 2 tokens, got {size}"
            )));
        }
        Ok(Vocab(size))
    }

    pub fn size(self) -> usize {
        self.0
    }
}

/// A non-empty token list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<TokenId>", into = "Vec<TokenId>")]
pub struct ResponseSequence(Vec<TokenId>);

impl ResponseSequence {
    pub fn new(tokens: Vec<TokenId>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(RcpoError::InvalidArgument("response has no tokens".into()));
        }
        Ok(ResponseSequence(tokens))
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<TokenId>> for ResponseSequence {
    type Error = RcpoError;
    fn try_from(v: Vec<TokenId>) -> Result<Self> {
        ResponseSequence::new(v)
    }
}

impl From<ResponseSequence> for Vec<TokenId> {
    fn from(r: ResponseSequence) -> Self {
        r.0
    }
}

/// Which logit row a token was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RowId {
    Start,
    After(TokenId),
}

#[derive(Debug, Clone, PartialEq)]
struct PromptTable {
    start: Vec<f64>,
    transitions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovPolicy {
    vocab: Vocab,
    prompts: BTreeMap<PromptId, PromptTable>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImplicitRewardConfig {
    pub beta: f64,
}

impl ImplicitRewardConfig {
    pub fn new(beta: f64) -> Result<Self> {
        if beta > 0.0 && beta.is_finite() {
            Ok(ImplicitRewardConfig { beta })
        } else {
            Err(RcpoError::InvalidArgument(format!("beta must be positive, got {beta}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionProxyConfig {
    pub entropy_floor: f64,
    pub proxy_cap: f64,
}

impl Default for DispersionProxyConfig {
    fn default() -> Self {
        DispersionProxyConfig {
            entropy_floor: 1e-8,
            proxy_cap: 20.0,
        }
    }
}

/// Sparse gradient over logit rows, keyed by prompt and row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolicyGradient {
    rows: BTreeMap<(PromptId, RowId), Vec<f64>>,
}

impl PolicyGradient {
    pub fn row(&self, prompt: &PromptId, row: RowId) -> Option<&[f64]> {
        self.rows.get(&(prompt.clone(), row)).map(Vec::as_slice)
    }

    pub fn rows(&self) -> impl Iterator<Item = (&(PromptId, RowId), &Vec<f64>)> {
        self.rows.iter()
    }

    /// `self += c · other`.
    pub fn add_scaled(&mut self, other: &PolicyGradient, c: f64) {
        for (key, g) in &other.rows {
            let row = self
                .rows
                .entry(key.clone())
                .or_insert_with(|| vec![0.0; g.len()]);
            for (a, &b) in row.iter_mut().zip(g) {
                *a += c * b;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for row in self.rows.values_mut() {
            row.iter_mut().for_each(|g| *g *= c);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.rows
            .values()
            .flat_map(|r| r.iter())
            .fold(0.0, |m, g| m.max(g.abs()))
    }

    fn accumulate_row(&mut self, prompt: &PromptId, row: RowId, logits: &[f64], observed: TokenId) {
        let probs = softmax(logits);
        let entry = self
            .rows
            .entry((prompt.clone(), row))
            .or_insert_with(|| vec![0.0; logits.len()]);
        for (t, (g, p)) in entry.iter_mut().zip(probs).enumerate() {
            let indicator = if t as TokenId == observed { 1.0 } else { 0.0 };
            *g += indicator - p;
        }
    }
}

/// Log-softmax of every row of one prompt, start row first, then the row
/// after each token. Lets a training step score many responses without
/// recomputing normalisers.
#[derive(Debug, Clone)]
pub(crate) struct PromptSnapshot {
    vocab: usize,
    log_probs: Vec<f64>,
}

impl PromptSnapshot {
    fn row_index(&self, row: RowId) -> usize {
        match row {
            RowId::Start => 0,
            RowId::After(t) => 1 + t as usize,
        }
    }

    /// Same value as [`MarkovPolicy::log_prob`]; `y` must already be checked.
    pub(crate) fn log_prob(&self, y: &ResponseSequence) -> f64 {
        let v = self.vocab;
        let total: f64 = MarkovPolicy::visits(y)
            .map(|(row, tok)| self.log_probs[self.row_index(row) * v + tok as usize])
            .sum();
        total.min(0.0)
    }

    /// `out += c · ∇ log π(y)`, with `out` laid out like the snapshot.
    pub(crate) fn add_grad(&self, y: &ResponseSequence, c: f64, out: &mut [f64]) {
        let v = self.vocab;
        for (row, tok) in MarkovPolicy::visits(y) {
            let base = self.row_index(row) * v;
            for t in 0..v {
                out[base + t] -= c * self.log_probs[base + t].exp();
            }
            out[base + tok as usize] += c;
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.log_probs.len()
    }
}

impl PolicyGradient {
    /// Builds the gradient for `prompt` from a buffer in snapshot layout.
    pub(crate) fn from_dense(prompt: &PromptId, vocab: usize, dense: &[f64]) -> Self {
        let mut rows = BTreeMap::new();
        for (i, chunk) in dense.chunks(vocab).enumerate() {
            if chunk.iter().any(|&g| g != 0.0) {
                let row = if i == 0 { RowId::Start } else { RowId::After(i as TokenId - 1) };
                rows.insert((prompt.clone(), row), chunk.to_vec());
            }
        }
        PolicyGradient { rows }
    }

    /// Merges gradients over disjoint prompts.
    pub(crate) fn extend(&mut self, other: PolicyGradient) {
        self.rows.extend(other.rows);
    }
}

fn entropy_of(logits: &[f64]) -> f64 {
    let lse = log_sum_exp(logits.iter().copied());
    let mut h = 0.0;
    for &z in logits {
        let lp = z - lse;
        let p = lp.exp();
        if p > 0.0 {
            h -= p * lp;
        }
    }
    h.max(0.0)
}

impl MarkovPolicy {
    /// A policy with no prompts yet.
    pub fn empty(vocab: Vocab) -> Self {
        MarkovPolicy {
            vocab,
            prompts: BTreeMap::new(),
        }
    }

    /// All-zero logits (uniform rows) for every prompt.
    pub fn uniform(vocab: Vocab, prompts: &[PromptId]) -> Self {
        let v = vocab.size();
        let mut p = Self::empty(vocab);
        for id in prompts {
            p.prompts.insert(
                id.clone(),
                PromptTable {
                    start: vec![0.0; v],
                    transitions: vec![0.0; v * v],
                },
            );
        }
        p
    }

    /// Logits drawn i.i.d. uniform on `[-scale, scale]`.
    pub fn random<R: Rng + ?Sized>(vocab: Vocab, prompts: &[PromptId], scale: f64, rng: &mut R) -> Self {
        let v = vocab.size();
        let mut p = Self::empty(vocab);
        for id in prompts {
            let mut draw = |n: usize| -> Vec<f64> {
                (0..n).map(|_| rng.random_range(-scale..=scale)).collect()
            };
            let start = draw(v);
            let transitions = draw(v * v);
            p.prompts.insert(id.clone(), PromptTable { start, transitions });
        }
        p
    }

    pub fn insert_prompt(
        &mut self,
        prompt: PromptId,
        start_logits: Vec<f64>,
        transition_logits: Vec<f64>,
    ) -> Result<()> {
        let v = self.vocab.size();
        if start_logits.len() != v || transition_logits.len() != v * v {
            return Err(RcpoError::VocabMismatch(format!(
                "prompt {prompt}: expected {v} start and {} transition logits, got {} and {}",
                v * v,
                start_logits.len(),
                transition_logits.len()
            )));
        }
        if start_logits
            .iter()
            .chain(&transition_logits)
            .any(|z| !z.is_finite())
        {
            return Err(RcpoError::InvalidArgument(format!(
                "prompt {prompt}: non-finite logit"
            )));
        }
        self.prompts.insert(
            prompt,
            PromptTable {
                start: start_logits,
                transitions: transition_logits,
            },
        );
        Ok(())
    }

    pub fn vocab(&self) -> Vocab {
        self.vocab
    }

    pub fn prompt_ids(&self) -> impl Iterator<Item = &PromptId> {
        self.prompts.keys()
    }

    pub fn has_prompt(&self, prompt: &PromptId) -> bool {
        self.prompts.contains_key(prompt)
    }

    fn table(&self, prompt: &PromptId) -> Result<&PromptTable> {
        self.prompts
            .get(prompt)
            .ok_or_else(|| RcpoError::UnknownPrompt(prompt.0.clone()))
    }

    fn check_token(&self, token: TokenId) -> Result<()> {
        if (token as usize) < self.vocab.size() {
            Ok(())
        } else {
            Err(RcpoError::TokenOutOfVocab {
                token,
                vocab: self.vocab.size(),
            })
        }
    }

    pub fn check_response(&self, y: &ResponseSequence) -> Result<()> {
        y.tokens().iter().try_for_each(|&t| self.check_token(t))
    }

    pub fn row(&self, prompt: &PromptId, row: RowId) -> Result<&[f64]> {
        let table = self.table(prompt)?;
        let v = self.vocab.size();
        Ok(match row {
            RowId::Start => &table.start,
            RowId::After(t) => {
                self.check_token(t)?;
                let t = t as usize;
                &table.transitions[t * v..(t + 1) * v]
            }
        })
    }

    fn row_mut(&mut self, prompt: &PromptId, row: RowId) -> Result<&mut [f64]> {
        let v = self.vocab.size();
        self.check_token(match row {
            RowId::Start => 0,
            RowId::After(t) => t,
        })?;
        let table = self
            .prompts
            .get_mut(prompt)
            .ok_or_else(|| RcpoError::UnknownPrompt(prompt.0.clone()))?;
        Ok(match row {
            RowId::Start => &mut table.start,
            RowId::After(t) => {
                let t = t as usize;
                &mut table.transitions[t * v..(t + 1) * v]
            }
        })
    }

    /// Rows visited by `y`, each paired with the token emitted from it.
    fn visits(y: &ResponseSequence) -> impl Iterator<Item = (RowId, TokenId)> + '_ {
        let toks = y.tokens();
        std::iter::once((RowId::Start, toks[0]))
            .chain(toks.windows(2).map(|w| (RowId::After(w[0]), w[1])))
    }

    /// `log π(y | prompt)`.
    pub fn log_prob(&self, prompt: &PromptId, y: &ResponseSequence) -> Result<f64> {
        self.check_response(y)?;
        let mut total = 0.0;
        for (row, tok) in Self::visits(y) {
            let logits = self.row(prompt, row)?;
            total += logits[tok as usize] - log_sum_exp(logits.iter().copied());
        }
        Ok(total.min(0.0))
    }

    /// `∇ log π(y | prompt)`: `onehot(next) − softmax(row)` summed per visited row.
    pub fn grad_log_prob(&self, prompt: &PromptId, y: &ResponseSequence) -> Result<PolicyGradient> {
        self.check_response(y)?;
        let mut grad = PolicyGradient::default();
        for (row, tok) in Self::visits(y) {
            let logits = self.row(prompt, row)?;
            grad.accumulate_row(prompt, row, logits, tok);
        }
        Ok(grad)
    }

    pub(crate) fn snapshot(&self, prompt: &PromptId) -> Result<PromptSnapshot> {
        let table = self.table(prompt)?;
        let v = self.vocab.size();
        let mut log_probs = Vec::with_capacity(v * (v + 1));
        for row in std::iter::once(&table.start[..]).chain(table.transitions.chunks(v)) {
            let lse = log_sum_exp(row.iter().copied());
            log_probs.extend(row.iter().map(|z| z - lse));
        }
        Ok(PromptSnapshot { vocab: v, log_probs })
    }

    /// Entropy (nats) of the next-token distribution after `token`.
    pub fn row_entropy(&self, prompt: &PromptId, token: TokenId) -> Result<f64> {
        Ok(entropy_of(self.row(prompt, RowId::After(token))?))
    }

    /// `θ ← θ + step · grad`.
    pub fn apply(&mut self, grad: &PolicyGradient, step: f64) -> Result<()> {
        for ((prompt, row), g) in grad.rows() {
            let logits = self.row_mut(prompt, *row)?;
            for (z, &d) in logits.iter_mut().zip(g) {
                *z += step * d;
            }
        }
        Ok(())
    }

    /// Multiplies every transition logit by `alpha`.
    pub fn sharpened(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        for table in out.prompts.values_mut() {
            table.transitions.iter_mut().for_each(|z| *z *= alpha);
        }
        out
    }

    /// Adds `c` to one logit; used by finite-difference checks.
    pub fn perturb(&mut self, prompt: &PromptId, row: RowId, token: TokenId, c: f64) -> Result<()> {
        self.check_token(token)?;
        self.row_mut(prompt, row)?[token as usize] += c;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&PolicyDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PolicyDocument = serde_json::from_str(text)?;
        doc.try_into()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PromptDocument {
    prompt_id: PromptId,
    start_logits: Vec<f64>,
    transition_logits: Vec<f64>,
}

/// On-disk layout: vocab size plus per-prompt start and row-major transition logits.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyDocument {
    vocab_size: usize,
    prompts: Vec<PromptDocument>,
}

impl From<&MarkovPolicy> for PolicyDocument {
    fn from(p: &MarkovPolicy) -> Self {
        PolicyDocument {
            vocab_size: p.vocab.size(),
            prompts: p
                .prompts
                .iter()
                .map(|(id, t)| PromptDocument {
                    prompt_id: id.clone(),
                    start_logits: t.start.clone(),
                    transition_logits: t.transitions.clone(),
                })
                .collect(),
        }
    }
}

impl TryFrom<PolicyDocument> for MarkovPolicy {
    type Error = RcpoError;

    fn try_from(doc: PolicyDocument) -> Result<Self> {
        let mut p = MarkovPolicy::empty(Vocab::new(doc.vocab_size)?);
        for pd in doc.prompts {
            if p.has_prompt(&pd.prompt_id) {
                return Err(RcpoError::InvalidArgument(format!(
                    "prompt {} listed twice",
                    pd.prompt_id
                )));
            }
            p.insert_prompt(pd.prompt_id, pd.start_logits, pd.transition_logits)?;
        }
        Ok(p)
    }
}

/// `β · (log π_θ(y|x) − log π_ref(y|x))`, the prompt-level `β log Z(x)` dropped.
pub fn implicit_reward(
    theta: &MarkovPolicy,
    reference: &MarkovPolicy,
    cfg: &ImplicitRewardConfig,
    prompt: &PromptId,
    y: &ResponseSequence,
) -> Result<f64> {
    if theta.vocab != reference.vocab {
        return Err(RcpoError::VocabMismatch(format!(
            "policy vocab {} vs reference vocab {}",
            theta.vocab.size(),
            reference.vocab.size()
        )));
    }
    Ok(cfg.beta * (theta.log_prob(prompt, y)? - reference.log_prob(prompt, y)?))
}

/// Entropy proxy for `−log φ(x)`: transition entropies along each response,
/// averaged over responses and normalised by `log n = N log V` with `N` the
/// longest response. An average at or below `entropy_floor` counts as a
/// point mass and yields `proxy_cap`; any other result is capped there too.
pub fn dispersion_proxy(
    policy: &MarkovPolicy,
    prompt: &PromptId,
    responses: &[ResponseSequence],
    cfg: &DispersionProxyConfig,
) -> Result<f64> {
    if responses.is_empty() {
        return Err(RcpoError::EmptyResponseSet);
    }
    let longest = responses.iter().map(ResponseSequence::len).max().unwrap_or(0);
    if longest < 2 {
        return Err(RcpoError::AllResponsesLengthOne);
    }
    let mut total = 0.0;
    for y in responses {
        policy.check_response(y)?;
        // H(Y^{j+1} | Y^j = y_j) for j = 1..|y|-1
        for &tok in &y.tokens()[..y.len() - 1] {
            total += policy.row_entropy(prompt, tok)?;
        }
    }
    let log_n = longest as f64 * (policy.vocab.size() as f64).ln();
    let average = total / (responses.len() as f64 * log_n);
    if average <= cfg.entropy_floor {
        return Ok(cfg.proxy_cap);
    }
    Ok((-average.ln()).min(cfg.proxy_cap))
}
