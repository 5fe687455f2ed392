use crate::choice::{check_dispersion, Assortment, ItemId, MallowsRmjModel, TopKRanking};
use crate::error::{RcpoError, Result};

/// Number of items of `s` that the central ranking places above `y`.
pub fn rmj_rank_distance(model: &MallowsRmjModel, s: &Assortment, y: ItemId) -> Result<usize> {
    s.require(y)?;
    let py = model.position(y)?;
    let mut d = 0;
    for &other in s.items() {
        if model.position(other)? < py {
            d += 1;
        }
    }
    Ok(d)
}

/// `1 + φ + … + φ^{n-1}`.
fn geometric_sum(n: usize, phi: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 0.0;
    for _ in 0..n {
        sum += term;
        term *= phi;
    }
    sum
}

/// `φ^{d(y,S)} / (1 + φ + … + φ^{|S|−1})`.
pub fn rmj_choice_prob(model: &MallowsRmjModel, s: &Assortment, y: ItemId) -> Result<f64> {
    let d = rmj_rank_distance(model, s, y)?;
    let phi = model.dispersion();
    Ok(phi.powi(d as i32) / geometric_sum(s.len(), phi))
}

/// Noisy-comparison probability that `winner` beats `loser`.
pub fn rmj_pairwise_prob(model: &MallowsRmjModel, winner: ItemId, loser: ItemId) -> Result<f64> {
    if winner == loser {
        return Err(RcpoError::IdenticalItems(winner));
    }
    let phi = model.dispersion();
    if model.position(winner)? < model.position(loser)? {
        Ok(1.0 / (1.0 + phi))
    } else {
        Ok(phi / (1.0 + phi))
    }
}

/// Exponent of the top-k closed form: adjacent inversions within the list
/// weighted by `|S|−i`, plus unranked items that beat the last ranked item.
pub fn rmj_topk_distance(
    model: &MallowsRmjModel,
    s: &Assortment,
    mu: &TopKRanking,
) -> Result<usize> {
    mu.validate_against(s)?;
    let n = s.len();
    let ranked = mu.items();
    let pos: Vec<usize> = ranked
        .iter()
        .map(|&it| model.position(it))
        .collect::<Result<_>>()?;
    let mut d = 0;
    for i in 0..ranked.len() - 1 {
        // 1-based position i+1 in the list carries weight |S| - (i+1)
        if pos[i] > pos[i + 1] {
            d += n - (i + 1);
        }
    }
    let last = pos[pos.len() - 1];
    for other in mu.unranked(s) {
        if last > model.position(other)? {
            d += 1;
        }
    }
    Ok(d)
}

/// `ψ(n,φ) = Π_{i=1}^{n} (1 + φ + … + φ^{i−1})`; `ψ(0,φ) = 1`.
pub fn psi(n: usize, phi: f64) -> Result<f64> {
    check_dispersion(phi)?;
    Ok(psi_unchecked(n, phi))
}

fn psi_unchecked(n: usize, phi: f64) -> f64 {
    let mut prod = 1.0;
    let mut partial = 0.0;
    let mut term = 1.0;
    for _ in 0..n {
        partial += term;
        term *= phi;
        prod *= partial;
    }
    prod
}

/// `log[ψ(|S|−k,φ)/ψ(|S|,φ)] + d(μ^k,S)·log φ`.
pub fn rmj_topk_log_prob(
    model: &MallowsRmjModel,
    s: &Assortment,
    mu: &TopKRanking,
) -> Result<f64> {
    let d = rmj_topk_distance(model, s, mu)?;
    let phi = model.dispersion();
    let n = s.len();
    let k = mu.k();
    let log_norm = psi_unchecked(n - k, phi).ln() - psi_unchecked(n, phi).ln();
    Ok(log_norm + d as f64 * phi.ln())
}

pub fn rmj_topk_prob(model: &MallowsRmjModel, s: &Assortment, mu: &TopKRanking) -> Result<f64> {
    let d = rmj_topk_distance(model, s, mu)?;
    let phi = model.dispersion();
    let n = s.len();
    let k = mu.k();
    Ok(psi_unchecked(n - k, phi) / psi_unchecked(n, phi) * phi.powi(d as i32))
}
