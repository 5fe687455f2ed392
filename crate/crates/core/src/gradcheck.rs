//! Central finite-difference checks of analytic gradients.

use std::collections::BTreeMap;

use rand::Rng;

use crate::choice::{Assortment, ItemId, TopKRanking};
use crate::datagen::record_rng;
use crate::error::Result;
use crate::losses::{
    LossKind, Observation, PairwiseObservation, ChoiceObservation, PromptId, RewardSlate,
    SmoothingConfig, TopKObservation,
};
use crate::policy::{MarkovPolicy, ResponseSequence, RowId, Vocab};

pub const FD_STEP: f64 = 1e-5;
pub const LOSS_TOLERANCE: f64 = 1e-5;
pub const POLICY_TOLERANCE: f64 = 1e-6;

/// `‖a − b‖∞ / max(‖a‖∞, ‖b‖∞)`, with a tiny floor so two zero vectors agree.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, x| m.max(x.abs()));
    diff / scale.max(1e-12)
}

/// A random slate and observation shaped for `kind`.
pub fn random_loss_instance<R: Rng + ?Sized>(kind: LossKind, rng: &mut R) -> Result<(RewardSlate, Observation)> {
    let prompt = PromptId::from("gradcheck");
    let phi = Some(rng.random_range(0.05..0.95));
    let size = match kind {
        LossKind::Dpo | LossKind::RmjPairwise => 2,
        _ => rng.random_range(2..=6),
    };
    let rewards: Vec<f64> = (0..size).map(|_| rng.random_range(-2.0..2.0)).collect();
    let slate = RewardSlate::from_slice(&rewards)?;
    let mut order: Vec<u32> = (0..size as u32).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let obs = match kind {
        LossKind::Dpo | LossKind::RmjPairwise => Observation::Pairwise(PairwiseObservation::new(
            prompt,
            ItemId(order[0]),
            ItemId(order[1]),
            phi,
        )?),
        LossKind::MnlDiscrete | LossKind::RmjDiscrete => Observation::Choice(ChoiceObservation::new(
            prompt,
            Assortment::from_ids(0..size as u32)?,
            ItemId(order[0]),
            phi,
        )?),
        LossKind::MnlTopK | LossKind::RmjTopK => {
            let k = rng.random_range(1..=size);
            Observation::TopK(TopKObservation::new(
                prompt,
                Assortment::from_ids(0..size as u32)?,
                TopKRanking::from_ids(order[..k].to_vec())?,
                phi,
            )?)
        }
    };
    Ok((slate, obs))
}

/// Central differences of the loss in each reward.
pub fn numeric_reward_grad(
    kind: LossKind,
    slate: &RewardSlate,
    obs: &Observation,
    smooth: &SmoothingConfig,
    h: f64,
) -> Result<BTreeMap<ItemId, f64>> {
    let mut out = BTreeMap::new();
    for (&item, &r) in slate.rewards() {
        let up = kind.evaluate(&slate.with_reward(item, r + h), obs, smooth)?.value;
        let down = kind.evaluate(&slate.with_reward(item, r - h), obs, smooth)?.value;
        out.insert(item, (up - down) / (2.0 * h));
    }
    Ok(out)
}

fn aligned(a: &BTreeMap<ItemId, f64>, b: &BTreeMap<ItemId, f64>) -> (Vec<f64>, Vec<f64>) {
    let keys: Vec<ItemId> = a.keys().chain(b.keys()).copied().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let get = |m: &BTreeMap<ItemId, f64>, k| m.get(k).copied().unwrap_or(0.0);
    (
        keys.iter().map(|k| get(a, k)).collect(),
        keys.iter().map(|k| get(b, k)).collect(),
    )
}

/// Relative error of the analytic reward gradient on one instance.
pub fn loss_gradient_error(
    kind: LossKind,
    slate: &RewardSlate,
    obs: &Observation,
    smooth: &SmoothingConfig,
) -> Result<f64> {
    let analytic = kind.evaluate(slate, obs, smooth)?.reward_grad;
    let numeric = numeric_reward_grad(kind, slate, obs, smooth, FD_STEP)?;
    let (a, n) = aligned(&analytic, &numeric);
    Ok(relative_error(&a, &n))
}

/// Per-trial relative errors for `trials` seeded random instances.
pub fn check_loss(kind: LossKind, trials: usize, seed: u64, smooth: &SmoothingConfig) -> Result<Vec<f64>> {
    (0..trials)
        .map(|t| {
            let mut rng = record_rng(seed, t as u64);
            let (slate, obs) = random_loss_instance(kind, &mut rng)?;
            loss_gradient_error(kind, &slate, &obs, smooth)
        })
        .collect()
}

/// Relative error of `grad_log_prob` against central differences over every
/// logit of the prompt's table.
pub fn log_prob_gradient_error(policy: &MarkovPolicy, prompt: &PromptId, y: &ResponseSequence) -> Result<f64> {
    let v = policy.vocab().size();
    let grad = policy.grad_log_prob(prompt, y)?;
    let rows = std::iter::once(RowId::Start).chain((0..v as u32).map(RowId::After));
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for row in rows {
        let g = grad.row(prompt, row);
        for t in 0..v as u32 {
            analytic.push(g.map_or(0.0, |g| g[t as usize]));
            let mut up = policy.clone();
            up.perturb(prompt, row, t, FD_STEP)?;
            let mut down = policy.clone();
            down.perturb(prompt, row, t, -FD_STEP)?;
            numeric.push((up.log_prob(prompt, y)? - down.log_prob(prompt, y)?) / (2.0 * FD_STEP));
        }
    }
    Ok(relative_error(&analytic, &numeric))
}

/// Per-trial errors for random policies (V ∈ 2..=6) and responses (length 1..=6).
pub fn check_log_prob(trials: usize, seed: u64) -> Result<Vec<f64>> {
    let prompt = PromptId::from("gradcheck");
    (0..trials)
        .map(|t| {
            let mut rng = record_rng(seed, t as u64);
            let v = rng.random_range(2..=6usize);
            let policy = MarkovPolicy::random(Vocab::new(v)?, std::slice::from_ref(&prompt), 2.0, &mut rng);
            let len = rng.random_range(1..=6usize);
            let y = ResponseSequence::new((0..len).map(|_| rng.random_range(0..v as u32)).collect())?;
            log_prob_gradient_error(&policy, &prompt, &y)
        })
        .collect()
}
