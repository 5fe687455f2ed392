use crate::choice::{Assortment, ItemId, TopKRanking, UtilityVector};
use crate::error::Result;
use crate::numeric::log_sum_exp;

/// `log P(y | S) = ν_y − log Σ_{y'∈S} e^{ν_{y'}}`.
pub fn mnl_choice_log_prob(nu: &UtilityVector, s: &Assortment, y: ItemId) -> Result<f64> {
    s.require(y)?;
    let values = nu.on(s)?;
    Ok(nu.get(y)? - log_sum_exp(values.iter().copied()))
}

/// Softmax choice probability of `y` within `s`.
pub fn mnl_choice_prob(nu: &UtilityVector, s: &Assortment, y: ItemId) -> Result<f64> {
    mnl_choice_log_prob(nu, s, y).map(f64::exp)
}

/// Plackett-Luce log-probability: each ranked item is an MNL choice from the
/// items not yet ranked.
pub fn mnl_topk_log_prob(nu: &UtilityVector, s: &Assortment, mu: &TopKRanking) -> Result<f64> {
    mu.validate_against(s)?;
    let mut remaining: Vec<(ItemId, f64)> = s
        .items()
        .iter()
        .map(|&it| nu.get(it).map(|v| (it, v)))
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    for &chosen in mu.items() {
        let lse = log_sum_exp(remaining.iter().map(|&(_, v)| v));
        total += nu.get(chosen)? - lse;
        remaining.retain(|&(it, _)| it != chosen);
    }
    Ok(total)
}

pub fn mnl_topk_prob(nu: &UtilityVector, s: &Assortment, mu: &TopKRanking) -> Result<f64> {
    mnl_topk_log_prob(nu, s, mu).map(f64::exp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::RcpoError;

    #[test]
    fn uniform_utilities_are_symmetric() {
        let nu = UtilityVector::from_slice(&[0.0, 0.0]).unwrap();
        let s = Assortment::from_ids([0, 1]).unwrap();
        assert!((mnl_choice_prob(&nu, &s, ItemId(0)).unwrap() - 0.5).abs() < 1e-15);

        let nu = UtilityVector::from_slice(&[1.0, 1.0, 1.0]).unwrap();
        let s = Assortment::from_ids([0, 1, 2]).unwrap();
        assert!((mnl_choice_prob(&nu, &s, ItemId(1)).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let mu = TopKRanking::from_ids([2, 0]).unwrap();
        assert!((mnl_topk_prob(&nu, &s, &mu).unwrap() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn top1_reduces_to_choice() {
        let nu = UtilityVector::from_slice(&[0.3, -1.2, 2.5, 0.0]).unwrap();
        let s = Assortment::from_ids([0, 1, 2, 3]).unwrap();
        for y in 0..4 {
            let mu = TopKRanking::from_ids([y]).unwrap();
            let a = mnl_topk_prob(&nu, &s, &mu).unwrap();
            let b = mnl_choice_prob(&nu, &s, ItemId(y)).unwrap();
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn large_utilities_do_not_overflow() {
        let nu = UtilityVector::from_slice(&[700.0, 699.0, -700.0]).unwrap();
        let s = Assortment::from_ids([0, 1, 2]).unwrap();
        let p = mnl_choice_prob(&nu, &s, ItemId(0)).unwrap();
        let expected = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((p - expected).abs() < 1e-12);
    }

    #[test]
    fn errors_for_foreign_items() {
        let nu = UtilityVector::from_slice(&[0.0, 0.0]).unwrap();
        let s = Assortment::from_ids([0, 1]).unwrap();
        assert!(matches!(
            mnl_choice_prob(&nu, &s, ItemId(5)),
            Err(RcpoError::ItemNotInAssortment(_))
        ));
        let s3 = Assortment::from_ids([0, 1, 2]).unwrap();
        assert!(matches!(
            mnl_choice_prob(&nu, &s3, ItemId(0)),
            Err(RcpoError::UtilityMissing(_))
        ));
        let bad = TopKRanking::from_ids([0, 9]).unwrap();
        assert!(matches!(
            mnl_topk_prob(&nu, &s, &bad),
            Err(RcpoError::InvalidRanking(_))
        ));
    }
}
