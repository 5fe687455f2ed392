use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::choice::{Assortment, GumbelOracleConfig, ItemId, TopKRanking, UtilityVector};
use crate::error::Result;

/// A Monte Carlo estimate and its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl McEstimate {
    fn from_hits(hits: usize, samples: usize) -> Self {
        let p = hits as f64 / samples as f64;
        McEstimate {
            estimate: p,
            std_error: (p * (1.0 - p) / samples as f64).sqrt(),
            samples,
        }
    }

    /// `|estimate − target| ≤ z·SE`.
    pub fn within(&self, target: f64, z: f64) -> bool {
        (self.estimate - target).abs() <= z * self.std_error
    }
}

/// Standard Gumbel draw by inverse CDF on the open unit interval.
pub fn gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    -(-u.ln()).ln()
}

/// Runs `samples` perturbations of the utilities on `s` and counts draws
/// where `event` holds on the perturbed vector (assortment order).
fn count_events<F>(
    base: &[f64],
    cfg: &GumbelOracleConfig,
    mut event: F,
) -> usize
where
    F: FnMut(&[f64]) -> bool,
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut perturbed = vec![0.0; base.len()];
    let mut hits = 0;
    for _ in 0..cfg.sample_count {
        for (p, &b) in perturbed.iter_mut().zip(base) {
            *p = b + gumbel(&mut rng);
        }
        if event(&perturbed) {
            hits += 1;
        }
    }
    hits
}

/// Estimates `P(ν_y + ε_y is the maximum over S)` with i.i.d. Gumbel shocks.
pub fn rum_choice_prob_mc(
    nu: &UtilityVector,
    s: &Assortment,
    y: ItemId,
    cfg: &GumbelOracleConfig,
) -> Result<McEstimate> {
    let mu = TopKRanking::new(vec![y])?;
    s.require(y)?;
    rum_topk_prob_mc(nu, s, &mu, cfg)
}

/// Estimates the probability that the k largest perturbed utilities occur at
/// `μ_1, …, μ_k` in that order.
pub fn rum_topk_prob_mc(
    nu: &UtilityVector,
    s: &Assortment,
    mu: &TopKRanking,
    cfg: &GumbelOracleConfig,
) -> Result<McEstimate> {
    mu.validate_against(s)?;
    let base = nu.on(s)?;
    let idx: Vec<usize> = mu
        .items()
        .iter()
        .map(|it| s.items().iter().position(|x| x == it).expect("validated"))
        .collect();
    let rest: Vec<usize> = (0..s.len()).filter(|i| !idx.contains(i)).collect();
    let hits = count_events(&base, cfg, |u| {
        let ordered = idx.windows(2).all(|w| u[w[0]] > u[w[1]]);
        let last = u[idx[idx.len() - 1]];
        ordered && rest.iter().all(|&j| last > u[j])
    });
    Ok(McEstimate::from_hits(hits, cfg.sample_count))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sample_is_zero_or_one() {
        let nu = UtilityVector::from_slice(&[0.2, -0.4]).unwrap();
        let s = Assortment::from_ids([0, 1]).unwrap();
        let cfg = GumbelOracleConfig::new(1, 3).unwrap();
        let e = rum_choice_prob_mc(&nu, &s, ItemId(0), &cfg).unwrap();
        assert!(e.estimate == 0.0 || e.estimate == 1.0);
    }

    #[test]
    fn deterministic_for_seed() {
        let nu = UtilityVector::from_slice(&[0.2, -0.4, 1.0]).unwrap();
        let s = Assortment::from_ids([0, 1, 2]).unwrap();
        let cfg = GumbelOracleConfig::new(5_000, 42).unwrap();
        let a = rum_choice_prob_mc(&nu, &s, ItemId(2), &cfg).unwrap();
        let b = rum_choice_prob_mc(&nu, &s, ItemId(2), &cfg).unwrap();
        assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
    }

    #[test]
    fn uniform_pair_is_near_half() {
        let nu = UtilityVector::from_slice(&[0.0, 0.0]).unwrap();
        let s = Assortment::from_ids([0, 1]).unwrap();
        let cfg = GumbelOracleConfig::new(100_000, 11).unwrap();
        let e = rum_choice_prob_mc(&nu, &s, ItemId(0), &cfg).unwrap();
        assert!(e.within(0.5, 3.0), "{e:?}");
    }

    #[test]
    fn top1_event_matches_choice_event_exactly() {
        let nu = UtilityVector::from_slice(&[0.5, -0.1, 0.9]).unwrap();
        let s = Assortment::from_ids([0, 1, 2]).unwrap();
        let cfg = GumbelOracleConfig::new(20_000, 8).unwrap();
        let a = rum_choice_prob_mc(&nu, &s, ItemId(1), &cfg).unwrap();
        let mu = TopKRanking::from_ids([1]).unwrap();
        let b = rum_topk_prob_mc(&nu, &s, &mu, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
