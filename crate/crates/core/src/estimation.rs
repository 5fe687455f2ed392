//! Maximum-likelihood fitting of choice models and the policy trainer.
//!
//! MNL utilities are fitted by gradient ascent on the exact (concave)
//! Plackett-Luce log-likelihood. Mallows-RMJ fitting is two-stage: a smoothed
//! surrogate orders latent scores into a central ranking, then the exact
//! likelihood is maximised over `φ` by golden-section search.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::choice::{
    psi, rmj_topk_distance, rmj_topk_log_prob, ItemId, MallowsRmjModel,
    UtilityVector,
};
use crate::datagen::DatasetRecord;
use crate::error::{RcpoError, Result};
use crate::losses::{
    LossKind, Observation, PromptId, RewardSlate, SmoothingConfig, TopKObservation,
};
use crate::numeric::{canonical_sum, log_sum_exp, score_desc, sigmoid, CompensatedSum};
use crate::policy::{
    dispersion_proxy, implicit_reward, DispersionProxyConfig, ImplicitRewardConfig, MarkovPolicy,
    PolicyGradient, PromptSnapshot, ResponseSequence,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Stop once the gradient ∞-norm falls below this.
    pub grad_tol: f64,
    pub seed: u64,
    /// Sigmoid slope of the Mallows ranking surrogate.
    pub smoothing: SmoothingConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            learning_rate: 1.0,
            max_iters: 1000,
            grad_tol: 1e-8,
            seed: 0,
            smoothing: SmoothingConfig::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(RcpoError::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.grad_tol.is_nan() || self.grad_tol <= 0.0 {
            return Err(RcpoError::InvalidArgument(format!(
                "gradient tolerance must be positive, got {}",
                self.grad_tol
            )));
        }
        SmoothingConfig::new(self.smoothing.temperature)?;
        Ok(())
    }
}

/// Observations collapsed to distinct `(assortment, ranking)` patterns over
/// universe indices, with multiplicities.
struct Patterns {
    universe: Vec<ItemId>,
    patterns: Vec<(Vec<usize>, Vec<usize>, f64)>,
    total: f64,
}

impl Patterns {
    fn build(observations: &[TopKObservation], universe: &[ItemId]) -> Result<Self> {
        if observations.is_empty() {
            return Err(RcpoError::EmptyData);
        }
        let index: BTreeMap<ItemId, usize> =
            universe.iter().enumerate().map(|(i, &it)| (it, i)).collect();
        if index.len() != universe.len() {
            return Err(RcpoError::InvalidArgument("universe lists an item twice".into()));
        }
        let lookup = |it: &ItemId| index.get(it).copied().ok_or(RcpoError::ItemOutsideUniverse(*it));
        let mut counts: BTreeMap<(Vec<usize>, Vec<usize>), f64> = BTreeMap::new();
        for obs in observations {
            obs.ranking.validate_against(&obs.assortment)?;
            let s = obs.assortment.items().iter().map(lookup).collect::<Result<Vec<_>>>()?;
            let r = obs.ranking.items().iter().map(lookup).collect::<Result<Vec<_>>>()?;
            *counts.entry((s, r)).or_insert(0.0) += 1.0;
        }
        Ok(Patterns {
            universe: universe.to_vec(),
            patterns: counts.into_iter().map(|((s, r), c)| (s, r, c)).collect(),
            total: observations.len() as f64,
        })
    }

    /// Mean Plackett-Luce log-likelihood and its gradient.
    fn mnl_objective(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let mut ll = 0.0;
        let mut grad = vec![0.0; u.len()];
        for (s, r, c) in &self.patterns {
            let mut pool = s.clone();
            for &w in r {
                let lse = log_sum_exp(pool.iter().map(|&j| u[j]));
                ll += c * (u[w] - lse);
                for &j in &pool {
                    grad[j] -= c * (u[j] - lse).exp();
                }
                grad[w] += c;
                pool.retain(|&j| j != w);
            }
        }
        grad.iter_mut().for_each(|g| *g /= self.total);
        (ll / self.total, grad)
    }

    /// `mnl_objective(v) − mnl_objective(u)` evaluated term by term, so that
    /// changes far below the objective's own rounding are still resolved.
    fn mnl_increment(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut terms = Vec::new();
        for (s, r, c) in &self.patterns {
            let mut pool = s.clone();
            for &w in r {
                let lse = log_sum_exp(pool.iter().map(|&j| u[j]));
                // lse(v) − lse(u) = log Σ p_j e^{δ_j}
                let mut inner = CompensatedSum::default();
                for &j in &pool {
                    inner.add((u[j] - lse).exp() * (v[j] - u[j]).exp_m1());
                }
                terms.push(c * ((v[w] - u[w]) - inner.total().ln_1p()));
                pool.retain(|&j| j != w);
            }
        }
        canonical_sum(&mut terms) / self.total
    }

    /// Mean smoothed Mallows top-k surrogate loss (unit `−log φ`) and gradient.
    fn rmj_surrogate(&self, scores: &[f64], gamma: f64) -> (f64, Vec<f64>) {
        let mut loss = 0.0;
        let mut grad = vec![0.0; scores.len()];
        let mut push = |worse: usize, better: usize, w: f64, c: f64, loss: &mut f64| {
            let s = sigmoid(gamma * (scores[worse] - scores[better]));
            *loss += c * w * s;
            let g = c * w * gamma * s * (1.0 - s);
            grad[worse] += g;
            grad[better] -= g;
        };
        for (s, r, c) in &self.patterns {
            let n = s.len();
            for i in 0..r.len() - 1 {
                push(r[i + 1], r[i], (n - (i + 1)) as f64, *c, &mut loss);
            }
            let last = r[r.len() - 1];
            for &j in s.iter().filter(|j| !r.contains(j)) {
                push(j, last, 1.0, *c, &mut loss);
            }
        }
        grad.iter_mut().for_each(|g| *g /= self.total);
        (loss / self.total, grad)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

const MAX_HALVINGS: usize = 50;

struct AscentOutcome {
    point: Vec<f64>,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Gradient ascent with step halving: a step is accepted only if the
/// objective does not decrease, so the trace is non-decreasing.
///
/// Exact `f(cand) − f(point)` for objectives where a plain difference loses
/// too much precision.
type Increment<'a> = &'a dyn Fn(&[f64], &[f64]) -> f64;

/// With `increment`, acceptance and the trace use `increment(point, cand)`
/// in place of the difference of two objective values.
fn ascend<F>(
    start: Vec<f64>,
    cfg: &FitConfig,
    objective: F,
    increment: Option<Increment<'_>>,
) -> AscentOutcome
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let mut point = start;
    let (mut value, mut grad) = objective(&point);
    let mut trace = vec![value];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        if inf_norm(&grad) < cfg.grad_tol {
            converged = true;
            break;
        }
        let mut step = cfg.learning_rate;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand: Vec<f64> = point.iter().zip(&grad).map(|(p, g)| p + step * g).collect();
            let (v, g) = objective(&cand);
            let v = match increment {
                Some(inc) => {
                    let d = inc(&point, &cand);
                    (d >= 0.0).then_some(value + d)
                }
                None => (v >= value).then_some(v),
            };
            if let Some(v) = v {
                accepted = Some((cand, v, g));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, v, g)) = accepted else {
            break;
        };
        point = cand;
        value = v;
        grad = g;
        trace.push(value);
        iterations += 1;
    }
    if !converged && inf_norm(&grad) < cfg.grad_tol {
        converged = true;
    }
    AscentOutcome {
        point,
        trace,
        iterations,
        converged,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnlFitResult {
    /// Mean-centred utilities.
    pub utilities: UtilityVector,
    /// Total (not mean) log-likelihood at the estimate.
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Mean log-likelihood after every accepted step, starting value first.
    pub trace: Vec<f64>,
}

/// Exact Plackett-Luce log-likelihood of the observations.
pub fn mnl_log_likelihood(nu: &UtilityVector, observations: &[TopKObservation]) -> Result<f64> {
    let mut terms = observations
        .iter()
        .map(|o| crate::choice::mnl_topk_log_prob(nu, &o.assortment, &o.ranking))
        .collect::<Result<Vec<_>>>()?;
    Ok(canonical_sum(&mut terms))
}

pub fn fit_mnl_mle(
    observations: &[TopKObservation],
    universe: &[ItemId],
    cfg: &FitConfig,
) -> Result<MnlFitResult> {
    let zero: UtilityVector = universe.iter().map(|&it| (it, 0.0)).collect();
    fit_mnl_mle_from(observations, universe, cfg, &zero)
}

/// As [`fit_mnl_mle`], starting from `init` (missing items start at 0).
pub fn fit_mnl_mle_from(
    observations: &[TopKObservation],
    universe: &[ItemId],
    cfg: &FitConfig,
    init: &UtilityVector,
) -> Result<MnlFitResult> {
    cfg.validate()?;
    let pats = Patterns::build(observations, universe)?;
    let start: Vec<f64> = universe.iter().map(|&it| init.get(it).unwrap_or(0.0)).collect();
    let mean = start.iter().sum::<f64>() / start.len() as f64;
    let start: Vec<f64> = start.into_iter().map(|x| x - mean).collect();
    let increment = |u: &[f64], v: &[f64]| pats.mnl_increment(u, v);
    let out = ascend(start, cfg, |u| pats.mnl_objective(u), Some(&increment));
    let mean = out.point.iter().sum::<f64>() / out.point.len() as f64;
    let utilities: UtilityVector = pats
        .universe
        .iter()
        .zip(&out.point)
        .map(|(&it, &u)| (it, u - mean))
        .collect();
    let log_likelihood = out.trace.last().copied().unwrap_or(f64::NAN) * pats.total;
    Ok(MnlFitResult {
        utilities,
        log_likelihood,
        iterations: out.iterations,
        converged: out.converged,
        trace: out.trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmjFitResult {
    pub central_ranking: Vec<ItemId>,
    pub phi_hat: f64,
    /// Exact log-likelihood at `(central_ranking, phi_hat)`.
    pub log_likelihood: f64,
    pub converged: bool,
    /// `φ̂` landed within one search resolution of a search bound.
    pub boundary_hit: bool,
    pub iterations: usize,
    /// Latent scores from the ranking stage.
    pub scores: UtilityVector,
}

/// Search interval and resolution for `φ`.
pub const PHI_SEARCH_LOW: f64 = 0.001;
pub const PHI_SEARCH_HIGH: f64 = 0.999;
pub const PHI_RESOLUTION: f64 = 1e-4;

/// Exact Mallows-RMJ log-likelihood of the observations.
pub fn rmj_log_likelihood(model: &MallowsRmjModel, observations: &[TopKObservation]) -> Result<f64> {
    let mut terms = observations
        .iter()
        .map(|o| rmj_topk_log_prob(model, &o.assortment, &o.ranking))
        .collect::<Result<Vec<_>>>()?;
    Ok(canonical_sum(&mut terms))
}

/// Log-likelihood in `φ` for a fixed ranking, from sufficient statistics:
/// total distance and `(|S|, k)` multiplicities.
struct PhiProfile {
    total_distance: f64,
    shapes: BTreeMap<(usize, usize), f64>,
}

impl PhiProfile {
    fn eval(&self, phi: f64) -> f64 {
        let mut ll = self.total_distance * phi.ln();
        for (&(n, k), &c) in &self.shapes {
            let ratio = psi(n - k, phi).expect("phi in range") / psi(n, phi).expect("phi in range");
            ll += c * ratio.ln();
        }
        ll
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Golden-section maximisation of `f` over `φ ∈ [low, high]` in logit
/// coordinates; endpoints are compared against the interior optimum.
fn golden_section_phi<F: Fn(f64) -> f64>(f: F) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (logit(PHI_SEARCH_LOW), logit(PHI_SEARCH_HIGH));
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(sigmoid(c)), f(sigmoid(d)));
    while sigmoid(b) - sigmoid(a) > PHI_RESOLUTION {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(sigmoid(c));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(sigmoid(d));
        }
    }
    let mid = sigmoid(0.5 * (a + b));
    [mid, PHI_SEARCH_LOW, PHI_SEARCH_HIGH]
        .into_iter()
        .map(|p| (f(p), p))
        .fold((f64::NEG_INFINITY, mid), |best, cand| if cand.0 > best.0 { cand } else { best })
        .1
}

pub fn fit_rmj_mle(
    observations: &[TopKObservation],
    universe: &[ItemId],
    cfg: &FitConfig,
) -> Result<RmjFitResult> {
    cfg.validate()?;
    let pats = Patterns::build(observations, universe)?;
    let gamma = cfg.smoothing.temperature;
    let out = ascend(vec![0.0; universe.len()], cfg, |s| {
        let (loss, grad) = pats.rmj_surrogate(s, gamma);
        (-loss, grad.into_iter().map(|g| -g).collect())
    }, None);
    let mut order: Vec<(f64, ItemId)> = out.point.iter().copied().zip(universe.iter().copied()).collect();
    order.sort_by(|a, b| score_desc(*a, *b));
    let central: Vec<ItemId> = order.iter().map(|&(_, it)| it).collect();
    let ranked = MallowsRmjModel::new(central.clone(), 0.5)?;

    let mut total_distance = 0.0;
    let mut shapes = BTreeMap::new();
    for obs in observations {
        total_distance += rmj_topk_distance(&ranked, &obs.assortment, &obs.ranking)? as f64;
        *shapes.entry((obs.assortment.len(), obs.ranking.k())).or_insert(0.0) += 1.0;
    }
    let profile = PhiProfile {
        total_distance,
        shapes,
    };
    let phi_hat = golden_section_phi(|p| profile.eval(p));
    let boundary_hit = phi_hat - PHI_SEARCH_LOW < PHI_RESOLUTION || PHI_SEARCH_HIGH - phi_hat < PHI_RESOLUTION;
    let model = ranked.with_dispersion(phi_hat)?;
    Ok(RmjFitResult {
        central_ranking: central,
        phi_hat,
        log_likelihood: rmj_log_likelihood(&model, observations)?,
        converged: out.converged && !boundary_hit,
        boundary_hit,
        iterations: out.iterations,
        scores: universe.iter().copied().zip(out.point).collect(),
    })
}

/// Exact likelihood in `φ` for a fixed central ranking; exposed for checks on
/// the search.
pub fn rmj_profile_log_likelihood(
    central: &[ItemId],
    observations: &[TopKObservation],
    phi: f64,
) -> Result<f64> {
    rmj_log_likelihood(&MallowsRmjModel::new(central.to_vec(), phi)?, observations)
}

/// A ground-truth ordered pair of responses for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldoutPair {
    pub prompt: PromptId,
    pub better: ResponseSequence,
    pub worse: ResponseSequence,
}

impl HeldoutPair {
    pub fn reversed(&self) -> Self {
        HeldoutPair {
            prompt: self.prompt.clone(),
            better: self.worse.clone(),
            worse: self.better.clone(),
        }
    }
}

/// Fraction of pairs whose implicit rewards agree with the ground truth;
/// ties count one half.
pub fn evaluate_alignment(
    theta: &MarkovPolicy,
    reference: &MarkovPolicy,
    reward: &ImplicitRewardConfig,
    heldout: &[HeldoutPair],
) -> Result<f64> {
    if heldout.is_empty() {
        return Err(RcpoError::EmptyHeldout);
    }
    let mut score = 0.0;
    for pair in heldout {
        let rb = implicit_reward(theta, reference, reward, &pair.prompt, &pair.better)?;
        let rw = implicit_reward(theta, reference, reward, &pair.prompt, &pair.worse)?;
        score += if rb > rw {
            1.0
        } else if rb == rw {
            0.5
        } else {
            0.0
        };
    }
    Ok(score / heldout.len() as f64)
}

/// Pairs implied by each record's ranking: consecutive ranked items, and the
/// last ranked item over every unranked one.
pub fn implied_pairs(dataset: &[DatasetRecord]) -> Result<Vec<HeldoutPair>> {
    let mut out = Vec::new();
    for rec in dataset {
        let s = rec.assortment()?;
        let mu = rec.ranking()?;
        let ranked = mu.items();
        let mut push = |a: ItemId, b: ItemId| -> Result<()> {
            out.push(HeldoutPair {
                prompt: rec.prompt_id.clone(),
                better: rec.response(a)?,
                worse: rec.response(b)?,
            });
            Ok(())
        };
        for w in ranked.windows(2) {
            push(w[0], w[1])?;
        }
        for other in mu.unranked(&s) {
            push(ranked[ranked.len() - 1], other)?;
        }
    }
    Ok(out)
}

/// Everything the trainer needs besides the policies and data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub loss: LossKind,
    pub smoothing: SmoothingConfig,
    pub reward: ImplicitRewardConfig,
    pub fit: FitConfig,
    /// Used for Mallows losses when a record carries no dispersion.
    pub fallback_phi: Option<f64>,
    /// When set, records lacking a dispersion (and with no fallback) get
    /// `φ = exp(−proxy)` computed once from the reference policy.
    pub proxy: Option<DispersionProxyConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub loss: LossKind,
    /// Mean loss before each step and after the last one.
    pub loss_trajectory: Vec<f64>,
    /// Accuracy on the pairs implied by the training rankings.
    pub final_pairwise_accuracy: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
    pub settings: TrainSettings,
}

struct PreparedRecord {
    observation: Observation,
    items: Vec<ItemId>,
    responses: Vec<ResponseSequence>,
    reference_log_probs: Vec<f64>,
}

fn resolve_dispersion(
    rec: &DatasetRecord,
    responses: &[ResponseSequence],
    reference: &MarkovPolicy,
    settings: &TrainSettings,
) -> Result<Option<f64>> {
    if let Some(phi) = rec.dispersion {
        return Ok(Some(phi));
    }
    if let Some(phi) = settings.fallback_phi {
        return Ok(Some(phi));
    }
    match &settings.proxy {
        Some(cfg) => {
            let proxy = dispersion_proxy(reference, &rec.prompt_id, responses, cfg)?;
            // proxy_cap keeps φ away from 0; a proxy of 0 would give φ = 1
            let phi = (-proxy).exp().min(1.0 - f64::EPSILON);
            Ok(Some(phi))
        }
        None => Err(RcpoError::MissingDispersion),
    }
}

fn prepare(
    theta: &MarkovPolicy,
    reference: &MarkovPolicy,
    dataset: &[DatasetRecord],
    settings: &TrainSettings,
) -> Result<Vec<PreparedRecord>> {
    if theta.vocab() != reference.vocab() {
        return Err(RcpoError::VocabMismatch(format!(
            "policy vocab {} vs reference vocab {}",
            theta.vocab().size(),
            reference.vocab().size()
        )));
    }
    if dataset.is_empty() {
        return Err(RcpoError::EmptyData);
    }
    dataset
        .iter()
        .enumerate()
        .map(|(index, rec)| {
            rec.validate().map_err(|message| RcpoError::InvalidRecord {
                index,
                line: index + 1,
                message,
            })?;
            let items = rec.assortment.clone();
            let responses = items
                .iter()
                .map(|&it| rec.response(it))
                .collect::<Result<Vec<_>>>()?;
            let mut observation = rec.observation()?;
            if settings.loss.is_mallows() {
                let phi = resolve_dispersion(rec, &responses, reference, settings)?;
                observation = observation.with_default_dispersion(phi)?;
            }
            let reference_log_probs = responses
                .iter()
                .map(|y| {
                    theta.log_prob(&rec.prompt_id, y)?;
                    reference.log_prob(&rec.prompt_id, y)
                })
                .collect::<Result<Vec<_>>>()?;
            let prepared = PreparedRecord {
                observation,
                items,
                responses,
                reference_log_probs,
            };
            // surface shape errors (e.g. a pairwise loss on a 3-item record) now
            let snap = theta.snapshot(&rec.prompt_id)?;
            let mut scratch = vec![0.0; snap.len()];
            record_loss(&snap, &prepared, settings, 1.0, &mut scratch)?;
            Ok(prepared)
        })
        .collect()
}

/// Loss of one record; adds `scale · ∂loss/∂θ` into `grad` (snapshot layout).
fn record_loss(
    snap: &PromptSnapshot,
    rec: &PreparedRecord,
    settings: &TrainSettings,
    scale: f64,
    grad: &mut [f64],
) -> Result<f64> {
    let beta = settings.reward.beta;
    let mut rewards = BTreeMap::new();
    for ((&it, y), &lp_ref) in rec.items.iter().zip(&rec.responses).zip(&rec.reference_log_probs) {
        rewards.insert(it, beta * (snap.log_prob(y) - lp_ref));
    }
    let slate = RewardSlate::new(rewards, beta)?;
    let eval = settings.loss.evaluate(&slate, &rec.observation, &settings.smoothing)?;
    for (&it, y) in rec.items.iter().zip(&rec.responses) {
        let dl_dr = eval.reward_grad.get(&it).copied().unwrap_or(0.0);
        if dl_dr != 0.0 {
            // ∂r/∂θ = β ∇ log π_θ
            snap.add_grad(y, scale * dl_dr * beta, grad);
        }
    }
    Ok(eval.value)
}

/// Mean loss over the dataset and its gradient in the policy logits. Work is
/// split by prompt; each prompt accumulates its records in dataset order.
fn full_batch(
    theta: &MarkovPolicy,
    records: &[PreparedRecord],
    settings: &TrainSettings,
) -> Result<(f64, PolicyGradient)> {
    let mut groups: BTreeMap<&PromptId, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry(r.observation.prompt()).or_default().push(i);
    }
    let groups: Vec<_> = groups.into_iter().collect();
    let n = records.len() as f64;
    let parts: Vec<(Vec<f64>, PolicyGradient)> = groups
        .par_iter()
        .map(|(prompt, indices)| {
            let snap = theta.snapshot(prompt)?;
            let mut dense = vec![0.0; snap.len()];
            let values = indices
                .iter()
                .map(|&i| record_loss(&snap, &records[i], settings, 1.0 / n, &mut dense))
                .collect::<Result<Vec<_>>>()?;
            Ok((values, PolicyGradient::from_dense(prompt, theta.vocab().size(), &dense)))
        })
        .collect::<Result<_>>()?;
    let mut values = Vec::with_capacity(records.len());
    let mut grad = PolicyGradient::default();
    for (v, g) in parts {
        values.extend(v);
        grad.extend(g);
    }
    Ok((canonical_sum(&mut values) / n, grad))
}

/// Mean training loss of `theta` on `dataset`.
pub fn dataset_loss(
    theta: &MarkovPolicy,
    reference: &MarkovPolicy,
    dataset: &[DatasetRecord],
    settings: &TrainSettings,
) -> Result<f64> {
    let records = prepare(theta, reference, dataset, settings)?;
    Ok(full_batch(theta, &records, settings)?.0)
}

/// Full-batch gradient descent on the chosen objective, with implicit rewards
/// of `theta` against the frozen `reference`.
pub fn train_rcpo(
    theta: &mut MarkovPolicy,
    reference: &MarkovPolicy,
    dataset: &[DatasetRecord],
    settings: &TrainSettings,
) -> Result<TrainReport> {
    settings.fit.validate()?;
    let records = prepare(theta, reference, dataset, settings)?;
    let mut trajectory = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let (value, grad) = full_batch(theta, &records, settings)?;
        trajectory.push(value);
        if grad.max_abs() < settings.fit.grad_tol {
            converged = true;
            break;
        }
        if iterations == settings.fit.max_iters {
            break;
        }
        theta.apply(&grad, -settings.fit.learning_rate)?;
        iterations += 1;
    }
    let pairs = implied_pairs(dataset)?;
    let final_pairwise_accuracy = if pairs.is_empty() {
        1.0
    } else {
        evaluate_alignment(theta, reference, &settings.reward, &pairs)?
    };
    Ok(TrainReport {
        loss: settings.loss,
        loss_trajectory: trajectory,
        final_pairwise_accuracy,
        iterations,
        converged,
        seed: settings.fit.seed,
        settings: settings.clone(),
    })
}

/// Logit change produced by a single training step; used by the
/// chain-rule homogeneity check.
pub fn first_step_update(
    theta: &MarkovPolicy,
    reference: &MarkovPolicy,
    dataset: &[DatasetRecord],
    settings: &TrainSettings,
) -> Result<PolicyGradient> {
    let records = prepare(theta, reference, dataset, settings)?;
    let (_, mut grad) = full_batch(theta, &records, settings)?;
    grad.scale(-settings.fit.learning_rate);
    Ok(grad)
}

/// Ranking of `universe` by descending utility, ties by ascending id.
pub fn ranking_by_utility(nu: &UtilityVector) -> Vec<ItemId> {
    let mut order: Vec<(f64, ItemId)> = nu.iter().map(|(it, v)| (v, it)).collect();
    order.sort_by(|a, b| score_desc(*a, *b));
    order.into_iter().map(|(_, it)| it).collect()
}

/// Converts dataset records to top-k observations for fitting.
pub fn observations_of(dataset: &[DatasetRecord]) -> Result<Vec<TopKObservation>> {
    dataset.iter().map(DatasetRecord::topk_observation).collect()
}

/// Sorted union of every item in every assortment.
pub fn universe_of(observations: &[TopKObservation]) -> Vec<ItemId> {
    let mut all: Vec<ItemId> = observations
        .iter()
        .flat_map(|o| o.assortment.items().iter().copied())
        .collect();
    all.sort();
    all.dedup();
    all
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choice::{Assortment, TopKRanking};

    fn obs(s: &[u32], r: &[u32]) -> TopKObservation {
        TopKObservation::new(
            PromptId::from("x"),
            Assortment::from_ids(s.to_vec()).unwrap(),
            TopKRanking::from_ids(r.to_vec()).unwrap(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn always_winning_item_gives_monotone_trace() {
        let data: Vec<_> = (0..20).map(|_| obs(&[0, 1], &[0])).collect();
        let universe = [ItemId(0), ItemId(1)];
        let cfg = FitConfig {
            max_iters: 50,
            ..FitConfig::default()
        };
        let fit = fit_mnl_mle(&data, &universe, &cfg).unwrap();
        assert!(fit.trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(fit.trace.windows(2).any(|w| w[1] > w[0]));
        assert!(!fit.converged);
        let sum: f64 = fit.utilities.iter().map(|(_, v)| v).sum();
        assert!(sum.abs() < 1e-9);
    }

    #[test]
    fn empty_data_rejected() {
        assert!(matches!(
            fit_mnl_mle(&[], &[ItemId(0)], &FitConfig::default()),
            Err(RcpoError::EmptyData)
        ));
        assert!(matches!(
            fit_rmj_mle(&[], &[ItemId(0)], &FitConfig::default()),
            Err(RcpoError::EmptyData)
        ));
    }

    #[test]
    fn foreign_item_rejected() {
        let data = vec![obs(&[0, 5], &[5])];
        assert!(matches!(
            fit_mnl_mle(&data, &[ItemId(0), ItemId(1)], &FitConfig::default()),
            Err(RcpoError::ItemOutsideUniverse(ItemId(5)))
        ));
    }

    #[test]
    fn single_pair_hits_lower_phi_bound() {
        let data = vec![obs(&[0, 1], &[1])];
        let fit = fit_rmj_mle(&data, &[ItemId(0), ItemId(1)], &FitConfig::default()).unwrap();
        assert_eq!(fit.central_ranking, vec![ItemId(1), ItemId(0)]);
        assert!(fit.boundary_hit);
        assert!(!fit.converged);
        assert!(fit.phi_hat - PHI_SEARCH_LOW < PHI_RESOLUTION);
    }

    #[test]
    fn golden_section_finds_interior_maximum() {
        let phi = golden_section_phi(|p| -(p - 0.37) * (p - 0.37));
        assert!((phi - 0.37).abs() < PHI_RESOLUTION);
    }

    #[test]
    fn heldout_needs_pairs() {
        let p = MarkovPolicy::uniform(crate::policy::Vocab::new(2).unwrap(), &[PromptId::from("x")]);
        assert!(matches!(
            evaluate_alignment(&p, &p, &ImplicitRewardConfig::new(1.0).unwrap(), &[]),
            Err(RcpoError::EmptyHeldout)
        ));
    }
}
