//! Preference-optimization objectives evaluated on per-item rewards.
//!
//! | Kind | Feedback | Value |
//! |------|----------|-------|
//! | `dpo` | pairwise | `−log σ(f(w,l))` |
//! | `mnl-discrete` | single best | `−log σ(−log Σ_{i≠w} exp f(i,w))` |
//! | `mnl-topk` | top-k | sum of the single-best stage over the shrinking remainder |
//! | `rmj-pairwise` | pairwise | `−log φ · σ(γ f(l,w))` |
//! | `rmj-discrete` | single best | `−log φ · Σ_{i≠w} σ(γ f(i,w))` |
//! | `rmj-topk` | top-k | `−log φ · [Σ_{i<k} (|S|−i) σ(γ f(y_{i+1},y_i)) + Σ_{j∉μ} σ(γ f(y_j,y_k))]` |
//!
//! `f(a,b) = r(a) − r(b)` is the reward margin. Losses see rewards only, so
//! any reward provider can be plugged in; the trainer in
//! [`crate::estimation`] supplies implicit rewards of a Markov policy.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::choice::{check_dispersion, Assortment, ItemId, TopKRanking};
use crate::error::{RcpoError, Result};
use crate::numeric::{canonical_sum, log_sum_exp, sigmoid, softplus};

/// Identifier of a prompt `x`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptId(pub String);

impl fmt::Display for PromptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PromptId {
    fn from(s: &str) -> Self {
        PromptId(s.to_owned())
    }
}

/// Per-item rewards for one prompt. `beta` is the scale that produced them
/// (`r = β·log-ratio`); losses read only the rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardSlate {
    rewards: BTreeMap<ItemId, f64>,
    beta: f64,
}

impl RewardSlate {
    pub fn new(rewards: BTreeMap<ItemId, f64>, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(RcpoError::InvalidArgument(format!("beta must be positive, got {beta}")));
        }
        if let Some((id, r)) = rewards.iter().find(|(_, r)| !r.is_finite()) {
            return Err(RcpoError::InvalidArgument(format!("reward of item {id} is {r}")));
        }
        Ok(RewardSlate { rewards, beta })
    }

    /// Rewards for items `0..n`, with `β = 1`.
    pub fn from_slice(rewards: &[f64]) -> Result<Self> {
        Self::new(
            rewards
                .iter()
                .enumerate()
                .map(|(i, &r)| (ItemId(i as u32), r))
                .collect(),
            1.0,
        )
    }

    pub fn reward(&self, item: ItemId) -> Result<f64> {
        self.rewards
            .get(&item)
            .copied()
            .ok_or(RcpoError::MissingReward(item))
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn rewards(&self) -> &BTreeMap<ItemId, f64> {
        &self.rewards
    }

    pub fn margin(&self, a: ItemId, b: ItemId) -> Result<RewardMargin> {
        Ok(RewardMargin(self.reward(a)? - self.reward(b)?))
    }

    pub fn shifted(&self, c: f64) -> Self {
        RewardSlate {
            rewards: self.rewards.iter().map(|(&k, &v)| (k, v + c)).collect(),
            beta: self.beta,
        }
    }

    pub fn with_reward(&self, item: ItemId, value: f64) -> Self {
        let mut s = self.clone();
        s.rewards.insert(item, value);
        s
    }
}

/// `f(a,b) = r(a) − r(b)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct RewardMargin(pub f64);

/// Slope `γ` of the sigmoid that replaces indicator penalties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub temperature: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig { temperature: 1.0 }
    }
}

impl SmoothingConfig {
    pub fn new(temperature: f64) -> Result<Self> {
        if temperature > 0.0 && temperature.is_finite() {
            Ok(SmoothingConfig { temperature })
        } else {
            Err(RcpoError::InvalidArgument(format!(
                "smoothing temperature must be positive, got {temperature}"
            )))
        }
    }
}

/// Loss value with `∂loss/∂r(y)` for every item it touches.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossEval {
    pub value: f64,
    pub reward_grad: BTreeMap<ItemId, f64>,
}

impl LossEval {
    fn add_grad(&mut self, item: ItemId, g: f64) {
        *self.reward_grad.entry(item).or_insert(0.0) += g;
    }

    fn touch(&mut self, item: ItemId) {
        self.reward_grad.entry(item).or_insert(0.0);
    }
}

fn validate_dispersion(d: Option<f64>) -> Result<Option<f64>> {
    d.map(check_dispersion).transpose()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseObservation {
    pub prompt: PromptId,
    pub winner: ItemId,
    pub loser: ItemId,
    pub dispersion: Option<f64>,
}

impl PairwiseObservation {
    pub fn new(
        prompt: PromptId,
        winner: ItemId,
        loser: ItemId,
        dispersion: Option<f64>,
    ) -> Result<Self> {
        if winner == loser {
            return Err(RcpoError::IdenticalItems(winner));
        }
        Ok(PairwiseObservation {
            prompt,
            winner,
            loser,
            dispersion: validate_dispersion(dispersion)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceObservation {
    pub prompt: PromptId,
    pub assortment: Assortment,
    pub winner: ItemId,
    pub dispersion: Option<f64>,
}

impl ChoiceObservation {
    pub fn new(
        prompt: PromptId,
        assortment: Assortment,
        winner: ItemId,
        dispersion: Option<f64>,
    ) -> Result<Self> {
        assortment.require(winner)?;
        Ok(ChoiceObservation {
            prompt,
            assortment,
            winner,
            dispersion: validate_dispersion(dispersion)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopKObservation {
    pub prompt: PromptId,
    pub assortment: Assortment,
    pub ranking: TopKRanking,
    pub dispersion: Option<f64>,
}

impl TopKObservation {
    pub fn new(
        prompt: PromptId,
        assortment: Assortment,
        ranking: TopKRanking,
        dispersion: Option<f64>,
    ) -> Result<Self> {
        ranking.validate_against(&assortment)?;
        Ok(TopKObservation {
            prompt,
            assortment,
            ranking,
            dispersion: validate_dispersion(dispersion)?,
        })
    }
}

impl From<ChoiceObservation> for TopKObservation {
    fn from(c: ChoiceObservation) -> Self {
        TopKObservation {
            prompt: c.prompt,
            assortment: c.assortment,
            ranking: TopKRanking::new(vec![c.winner]).expect("single item"),
            dispersion: c.dispersion,
        }
    }
}

/// Any of the three feedback shapes.
#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    Pairwise(PairwiseObservation),
    Choice(ChoiceObservation),
    TopK(TopKObservation),
}

impl Observation {
    pub fn prompt(&self) -> &PromptId {
        match self {
            Observation::Pairwise(o) => &o.prompt,
            Observation::Choice(o) => &o.prompt,
            Observation::TopK(o) => &o.prompt,
        }
    }

    pub fn dispersion(&self) -> Option<f64> {
        match self {
            Observation::Pairwise(o) => o.dispersion,
            Observation::Choice(o) => o.dispersion,
            Observation::TopK(o) => o.dispersion,
        }
    }

    /// Items the observation involves, in assortment order.
    pub fn items(&self) -> Vec<ItemId> {
        match self {
            Observation::Pairwise(o) => vec![o.winner, o.loser],
            Observation::Choice(o) => o.assortment.items().to_vec(),
            Observation::TopK(o) => o.assortment.items().to_vec(),
        }
    }

    /// Fills a missing dispersion with `phi`.
    pub fn with_default_dispersion(mut self, phi: Option<f64>) -> Result<Self> {
        let phi = validate_dispersion(phi)?;
        let slot = match &mut self {
            Observation::Pairwise(o) => &mut o.dispersion,
            Observation::Choice(o) => &mut o.dispersion,
            Observation::TopK(o) => &mut o.dispersion,
        };
        if slot.is_none() {
            *slot = phi;
        }
        Ok(self)
    }

    /// Pairwise view; choice and top-k observations qualify when `|S| = 2`.
    pub fn as_pairwise(&self) -> Result<PairwiseObservation> {
        let (prompt, s, top, disp) = match self {
            Observation::Pairwise(o) => return Ok(o.clone()),
            Observation::Choice(o) => (&o.prompt, &o.assortment, o.winner, o.dispersion),
            Observation::TopK(o) => (&o.prompt, &o.assortment, o.ranking.top(), o.dispersion),
        };
        if s.len() != 2 {
            return Err(RcpoError::InvalidArgument(format!(
                "pairwise loss needs a two-item assortment, got {} items",
                s.len()
            )));
        }
        let loser = *s.items().iter().find(|&&it| it != top).expect("two items");
        PairwiseObservation::new(prompt.clone(), top, loser, disp)
    }

    /// Single-best view; a top-k observation keeps only its first item.
    pub fn as_choice(&self) -> Result<ChoiceObservation> {
        match self {
            Observation::Pairwise(o) => ChoiceObservation::new(
                o.prompt.clone(),
                Assortment::new(vec![o.winner, o.loser])?,
                o.winner,
                o.dispersion,
            ),
            Observation::Choice(o) => Ok(o.clone()),
            Observation::TopK(o) => ChoiceObservation::new(
                o.prompt.clone(),
                o.assortment.clone(),
                o.ranking.top(),
                o.dispersion,
            ),
        }
    }

    pub fn as_topk(&self) -> Result<TopKObservation> {
        match self {
            Observation::TopK(o) => Ok(o.clone()),
            other => Ok(other.as_choice()?.into()),
        }
    }
}

/// The six trainable objectives; names are the stable CLI spelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "dpo")]
    Dpo,
    #[serde(rename = "mnl-discrete")]
    MnlDiscrete,
    #[serde(rename = "mnl-topk")]
    MnlTopK,
    #[serde(rename = "rmj-pairwise")]
    RmjPairwise,
    #[serde(rename = "rmj-discrete")]
    RmjDiscrete,
    #[serde(rename = "rmj-topk")]
    RmjTopK,
}

impl LossKind {
    pub const ALL: [LossKind; 6] = [
        LossKind::Dpo,
        LossKind::MnlDiscrete,
        LossKind::MnlTopK,
        LossKind::RmjPairwise,
        LossKind::RmjDiscrete,
        LossKind::RmjTopK,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Dpo => "dpo",
            LossKind::MnlDiscrete => "mnl-discrete",
            LossKind::MnlTopK => "mnl-topk",
            LossKind::RmjPairwise => "rmj-pairwise",
            LossKind::RmjDiscrete => "rmj-discrete",
            LossKind::RmjTopK => "rmj-topk",
        }
    }

    pub fn is_mallows(self) -> bool {
        matches!(
            self,
            LossKind::RmjPairwise | LossKind::RmjDiscrete | LossKind::RmjTopK
        )
    }

    /// Smoothed evaluation, converting the observation to the shape the
    /// objective expects.
    pub fn evaluate(
        self,
        slate: &RewardSlate,
        obs: &Observation,
        smooth: &SmoothingConfig,
    ) -> Result<LossEval> {
        match self {
            LossKind::Dpo => dpo_loss(slate, &obs.as_pairwise()?),
            LossKind::MnlDiscrete => mnl_po_discrete_loss(slate, &obs.as_choice()?),
            LossKind::MnlTopK => mnl_po_topk_loss(slate, &obs.as_topk()?),
            LossKind::RmjPairwise => rmj_po_pairwise_loss(slate, &obs.as_pairwise()?, smooth),
            LossKind::RmjDiscrete => rmj_po_discrete_loss(slate, &obs.as_choice()?, smooth),
            LossKind::RmjTopK => rmj_po_topk_loss(slate, &obs.as_topk()?, smooth),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = RcpoError;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = LossKind::ALL.iter().map(|k| k.name()).collect();
                RcpoError::InvalidArgument(format!(
                    "unknown loss {s:?}; valid names: {}",
                    names.join(", ")
                ))
            })
    }
}

pub fn dpo_loss(slate: &RewardSlate, obs: &PairwiseObservation) -> Result<LossEval> {
    let f = slate.margin(obs.winner, obs.loser)?.0;
    let mut out = LossEval {
        value: softplus(-f),
        ..Default::default()
    };
    let weight = sigmoid(-f);
    out.add_grad(obs.winner, -weight);
    out.add_grad(obs.loser, weight);
    Ok(out)
}

/// One MNL stage: `winner` chosen out of `pool` (which contains it).
fn mnl_stage(slate: &RewardSlate, pool: &[ItemId], winner: ItemId, out: &mut LossEval) -> Result<()> {
    let rw = slate.reward(winner)?;
    let others: Vec<(ItemId, f64)> = pool
        .iter()
        .filter(|&&it| it != winner)
        .map(|&it| slate.reward(it).map(|r| (it, r - rw)))
        .collect::<Result<_>>()?;
    out.touch(winner);
    if others.is_empty() {
        return Ok(());
    }
    let lse = log_sum_exp(others.iter().map(|&(_, m)| m));
    out.value += softplus(lse);
    // dL/df_i = e^{f_i} / (1 + Σ e^{f_j}) = softmax weight of competitor i
    let denom_log = softplus(lse);
    let mut total = 0.0;
    for &(it, m) in &others {
        let g = (m - denom_log).exp();
        total += g;
        out.add_grad(it, g);
    }
    out.add_grad(winner, -total);
    Ok(())
}

pub fn mnl_po_discrete_loss(slate: &RewardSlate, obs: &ChoiceObservation) -> Result<LossEval> {
    let mut out = LossEval::default();
    mnl_stage(slate, obs.assortment.items(), obs.winner, &mut out)?;
    Ok(out)
}

pub fn mnl_po_topk_loss(slate: &RewardSlate, obs: &TopKObservation) -> Result<LossEval> {
    obs.ranking.validate_against(&obs.assortment)?;
    let mut out = LossEval::default();
    let mut pool: Vec<ItemId> = obs.assortment.items().to_vec();
    for &chosen in obs.ranking.items() {
        mnl_stage(slate, &pool, chosen, &mut out)?;
        pool.retain(|&it| it != chosen);
    }
    for &it in &pool {
        slate.reward(it)?;
        out.touch(it);
    }
    Ok(out)
}

fn neg_log_phi(dispersion: Option<f64>) -> Result<f64> {
    let phi = check_dispersion(dispersion.ok_or(RcpoError::MissingDispersion)?)?;
    Ok(-phi.ln())
}

/// Adds `scale · weight · σ(γ(r_worse − r_better))`, the smoothed penalty
/// for `worse` outranking `better`.
fn smoothed_penalty(
    slate: &RewardSlate,
    worse: ItemId,
    better: ItemId,
    weight: f64,
    scale: f64,
    gamma: f64,
    out: &mut LossEval,
) -> Result<()> {
    let f = slate.margin(worse, better)?.0;
    let s = sigmoid(gamma * f);
    out.value += scale * weight * s;
    let g = scale * weight * gamma * s * (1.0 - s);
    out.add_grad(worse, g);
    out.add_grad(better, -g);
    Ok(())
}

pub fn rmj_po_pairwise_loss(
    slate: &RewardSlate,
    obs: &PairwiseObservation,
    smooth: &SmoothingConfig,
) -> Result<LossEval> {
    let c = neg_log_phi(obs.dispersion)?;
    let mut out = LossEval::default();
    smoothed_penalty(slate, obs.loser, obs.winner, 1.0, c, smooth.temperature, &mut out)?;
    Ok(out)
}

pub fn rmj_po_discrete_loss(
    slate: &RewardSlate,
    obs: &ChoiceObservation,
    smooth: &SmoothingConfig,
) -> Result<LossEval> {
    let c = neg_log_phi(obs.dispersion)?;
    let mut out = LossEval::default();
    out.touch(obs.winner);
    for &other in obs.assortment.items() {
        if other != obs.winner {
            smoothed_penalty(slate, other, obs.winner, 1.0, c, smooth.temperature, &mut out)?;
        }
    }
    Ok(out)
}

/// Visits every weighted comparison of the top-k Mallows objective as
/// `(worse, better, weight)`.
fn rmj_topk_terms(obs: &TopKObservation) -> Vec<(ItemId, ItemId, f64)> {
    let n = obs.assortment.len();
    let ranked = obs.ranking.items();
    let mut terms = Vec::new();
    for i in 0..ranked.len() - 1 {
        terms.push((ranked[i + 1], ranked[i], (n - (i + 1)) as f64));
    }
    let last = ranked[ranked.len() - 1];
    for other in obs.ranking.unranked(&obs.assortment) {
        terms.push((other, last, 1.0));
    }
    terms
}

pub fn rmj_po_topk_loss(
    slate: &RewardSlate,
    obs: &TopKObservation,
    smooth: &SmoothingConfig,
) -> Result<LossEval> {
    obs.ranking.validate_against(&obs.assortment)?;
    let c = neg_log_phi(obs.dispersion)?;
    let mut out = LossEval::default();
    out.touch(obs.ranking.top());
    for (worse, better, w) in rmj_topk_terms(obs) {
        smoothed_penalty(slate, worse, better, w, c, smooth.temperature, &mut out)?;
    }
    Ok(out)
}

/// Unsmoothed Mallows-RMJ objective with exact indicators (`𝕀{0<0} = 0`).
/// The gradient is zero almost everywhere; use for diagnostics only.
pub fn hard_rmj_loss(slate: &RewardSlate, obs: &Observation, kind: LossKind) -> Result<LossEval> {
    let terms: Vec<(ItemId, ItemId, f64)> = match kind {
        LossKind::RmjPairwise => {
            let p = obs.as_pairwise()?;
            vec![(p.loser, p.winner, 1.0)]
        }
        LossKind::RmjDiscrete => {
            let c = obs.as_choice()?;
            c.assortment
                .items()
                .iter()
                .filter(|&&it| it != c.winner)
                .map(|&it| (it, c.winner, 1.0))
                .collect()
        }
        LossKind::RmjTopK => rmj_topk_terms(&obs.as_topk()?),
        other => {
            return Err(RcpoError::InvalidArgument(format!(
                "{other} has no indicator form"
            )))
        }
    };
    let c = neg_log_phi(obs.dispersion())?;
    let mut out = LossEval::default();
    for it in obs.items() {
        slate.reward(it)?;
        out.touch(it);
    }
    for (worse, better, w) in terms {
        // violation: r(better) − r(worse) < 0
        if slate.margin(better, worse)?.0 < 0.0 {
            out.value += c * w;
        }
    }
    Ok(out)
}

/// Mean loss over a batch with reward gradients keyed by `(prompt, item)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchLossEval {
    pub value: f64,
    pub reward_grad: BTreeMap<(PromptId, ItemId), f64>,
    pub count: usize,
}

/// Averages one loss kind over `(slate, observation)` pairs. Every sum is
/// taken in sorted order with compensation, so the result does not depend on
/// the order of `batch`.
pub fn batch_loss(
    kind: LossKind,
    batch: &[(RewardSlate, Observation)],
    smooth: &SmoothingConfig,
) -> Result<BatchLossEval> {
    if batch.is_empty() {
        return Err(RcpoError::EmptyBatch);
    }
    let evals: Vec<LossEval> = batch
        .par_iter()
        .map(|(slate, obs)| kind.evaluate(slate, obs, smooth))
        .collect::<Result<_>>()?;
    let n = batch.len() as f64;
    let mut values: Vec<f64> = evals.iter().map(|e| e.value).collect();
    let mut contributions: BTreeMap<(PromptId, ItemId), Vec<f64>> = BTreeMap::new();
    for ((_, obs), eval) in batch.iter().zip(&evals) {
        for (&item, &g) in &eval.reward_grad {
            contributions
                .entry((obs.prompt().clone(), item))
                .or_default()
                .push(g);
        }
    }
    let reward_grad = contributions
        .into_iter()
        .map(|(key, mut terms)| (key, canonical_sum(&mut terms) / n))
        .collect();
    Ok(BatchLossEval {
        value: canonical_sum(&mut values) / n,
        reward_grad,
        count: batch.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn p() -> PromptId {
        PromptId::from("x")
    }

    fn pair(w: u32, l: u32, phi: Option<f64>) -> PairwiseObservation {
        PairwiseObservation::new(p(), ItemId(w), ItemId(l), phi).unwrap()
    }

    fn choice(s: &[u32], w: u32, phi: Option<f64>) -> ChoiceObservation {
        ChoiceObservation::new(p(), Assortment::from_ids(s.to_vec()).unwrap(), ItemId(w), phi).unwrap()
    }

    fn topk(s: &[u32], r: &[u32], phi: Option<f64>) -> TopKObservation {
        TopKObservation::new(
            p(),
            Assortment::from_ids(s.to_vec()).unwrap(),
            TopKRanking::from_ids(r.to_vec()).unwrap(),
            phi,
        )
        .unwrap()
    }

    #[test]
    fn dpo_hand_values() {
        let slate = RewardSlate::from_slice(&[0.3, 0.3]).unwrap();
        let e = dpo_loss(&slate, &pair(0, 1, None)).unwrap();
        assert!((e.value - LN_2).abs() < 1e-15);
        assert!((e.reward_grad[&ItemId(0)] + 0.5).abs() < 1e-15);
        let slate = RewardSlate::from_slice(&[60.0, 0.0]).unwrap();
        assert!(dpo_loss(&slate, &pair(0, 1, None)).unwrap().value < 1e-25);
    }

    #[test]
    fn missing_reward_is_reported() {
        let slate = RewardSlate::from_slice(&[0.0]).unwrap();
        assert!(matches!(
            dpo_loss(&slate, &pair(0, 1, None)),
            Err(RcpoError::MissingReward(ItemId(1)))
        ));
    }

    #[test]
    fn mnl_discrete_equal_rewards() {
        let slate = RewardSlate::from_slice(&[1.0, 1.0, 1.0]).unwrap();
        let e = mnl_po_discrete_loss(&slate, &choice(&[0, 1, 2], 1, None)).unwrap();
        assert!((e.value - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn mnl_topk_equal_rewards() {
        let slate = RewardSlate::from_slice(&[0.0, 0.0, 0.0]).unwrap();
        let e = mnl_po_topk_loss(&slate, &topk(&[0, 1, 2], &[2, 0], None)).unwrap();
        assert!((e.value - 6f64.ln()).abs() < 1e-15);
        // a full ranking's last stage has no competitor
        let full = mnl_po_topk_loss(&slate, &topk(&[0, 1, 2], &[2, 0, 1], None)).unwrap();
        assert!((full.value - e.value).abs() < 1e-15);
    }

    #[test]
    fn rmj_pairwise_hand_value_and_limits() {
        let smooth = SmoothingConfig::default();
        let slate = RewardSlate::from_slice(&[0.0, 0.0]).unwrap();
        let e = rmj_po_pairwise_loss(&slate, &pair(0, 1, Some(0.5)), &smooth).unwrap();
        assert!((e.value - LN_2 * 0.5).abs() < 1e-15);
        let hi = RewardSlate::from_slice(&[50.0, 0.0]).unwrap();
        assert!(rmj_po_pairwise_loss(&hi, &pair(0, 1, Some(0.5)), &smooth).unwrap().value < 1e-20);
        let lo = RewardSlate::from_slice(&[-50.0, 0.0]).unwrap();
        let v = rmj_po_pairwise_loss(&lo, &pair(0, 1, Some(0.5)), &smooth).unwrap().value;
        assert!((v - LN_2).abs() < 1e-15);
    }

    #[test]
    fn rmj_requires_valid_dispersion() {
        let smooth = SmoothingConfig::default();
        let slate = RewardSlate::from_slice(&[0.0, 0.0]).unwrap();
        assert!(matches!(
            rmj_po_pairwise_loss(&slate, &pair(0, 1, None), &smooth),
            Err(RcpoError::MissingDispersion)
        ));
        assert!(PairwiseObservation::new(p(), ItemId(0), ItemId(1), Some(1.5)).is_err());
    }

    #[test]
    fn rmj_discrete_hand_value_and_saturation() {
        let smooth = SmoothingConfig::default();
        let slate = RewardSlate::from_slice(&[0.0; 4]).unwrap();
        let obs = choice(&[0, 1, 2, 3], 2, Some(0.5));
        let e = rmj_po_discrete_loss(&slate, &obs, &smooth).unwrap();
        assert!((e.value - LN_2 * 1.5).abs() < 1e-15);
        let boosted = slate.with_reward(ItemId(2), 10.0);
        let v = rmj_po_discrete_loss(&boosted, &obs, &smooth).unwrap().value;
        assert!(v < 1e-3 * LN_2 * 3.0);
    }

    #[test]
    fn rmj_topk_hand_value() {
        let smooth = SmoothingConfig::default();
        let slate = RewardSlate::from_slice(&[0.0; 4]).unwrap();
        let e = rmj_po_topk_loss(&slate, &topk(&[0, 1, 2, 3], &[1, 3], Some(0.5)), &smooth).unwrap();
        assert!((e.value - 2.5 * LN_2).abs() < 1e-15);
    }

    #[test]
    fn hard_loss_counts_violations() {
        let slate = RewardSlate::from_slice(&[3.0, 2.0, 1.0]).unwrap();
        let best = Observation::Choice(choice(&[0, 1, 2], 0, Some(0.5)));
        let worst = Observation::Choice(choice(&[0, 1, 2], 2, Some(0.5)));
        assert_eq!(hard_rmj_loss(&slate, &best, LossKind::RmjDiscrete).unwrap().value, 0.0);
        let v = hard_rmj_loss(&slate, &worst, LossKind::RmjDiscrete).unwrap().value;
        assert!((v - 2.0 * LN_2).abs() < 1e-15);
        // ties are not violations
        let tied = RewardSlate::from_slice(&[1.0, 1.0]).unwrap();
        let obs = Observation::Pairwise(pair(0, 1, Some(0.5)));
        assert_eq!(hard_rmj_loss(&tied, &obs, LossKind::RmjPairwise).unwrap().value, 0.0);
        assert!(hard_rmj_loss(&tied, &obs, LossKind::Dpo).is_err());
    }

    #[test]
    fn hard_topk_weights_positions() {
        // central order by reward: 0 > 1 > 2 > 3; observed ranking (3, 2)
        let slate = RewardSlate::from_slice(&[4.0, 3.0, 2.0, 1.0]).unwrap();
        let obs = Observation::TopK(topk(&[0, 1, 2, 3], &[3, 2], Some(0.5)));
        let v = hard_rmj_loss(&slate, &obs, LossKind::RmjTopK).unwrap().value;
        // adjacent inversion weight 3, plus items 0 and 1 beating item 2
        assert!((v - 5.0 * LN_2).abs() < 1e-15);
    }

    #[test]
    fn loss_names_round_trip() {
        for k in LossKind::ALL {
            assert_eq!(k.name().parse::<LossKind>().unwrap(), k);
        }
        let err = "simpo".parse::<LossKind>().unwrap_err().to_string();
        assert!(err.contains("rmj-topk"));
    }

    #[test]
    fn batch_of_duplicates_has_single_mean() {
        let slate = RewardSlate::from_slice(&[0.4, -0.2, 1.0]).unwrap();
        let obs = Observation::Choice(choice(&[0, 1, 2], 1, None));
        let one = batch_loss(LossKind::MnlDiscrete, &[(slate.clone(), obs.clone())], &SmoothingConfig::default()).unwrap();
        let single = mnl_po_discrete_loss(&slate, &obs.as_choice().unwrap()).unwrap();
        assert!((one.value - single.value).abs() < 1e-15);
        let two = batch_loss(
            LossKind::MnlDiscrete,
            &[(slate.clone(), obs.clone()), (slate, obs)],
            &SmoothingConfig::default(),
        )
        .unwrap();
        assert!((two.value - one.value).abs() < 1e-15);
        assert!(batch_loss(LossKind::Dpo, &[], &SmoothingConfig::default()).is_err());
    }
}
