use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcpo::choice::{mnl_choice_prob, mnl_topk_prob};
use rcpo::gradcheck::{check_loss, random_loss_instance, LOSS_TOLERANCE};
use rcpo::losses::*;
use rcpo::{Assortment, ItemId, TopKRanking, UtilityVector};

fn prompt() -> PromptId {
    PromptId::from("p")
}

fn slate_from(values: &[f64]) -> RewardSlate {
    RewardSlate::from_slice(values).unwrap()
}

fn as_utilities(slate: &RewardSlate) -> UtilityVector {
    slate.rewards().iter().map(|(&k, &v)| (k, v)).collect()
}

fn topk_obs(n: u32, order: &[u32], phi: Option<f64>) -> Observation {
    Observation::TopK(
        TopKObservation::new(
            prompt(),
            Assortment::from_ids(0..n).unwrap(),
            TopKRanking::from_ids(order.to_vec()).unwrap(),
            phi,
        )
        .unwrap(),
    )
}

fn grad_vec(e: &LossEval) -> Vec<f64> {
    e.reward_grad.values().copied().collect()
}

#[test]
fn finite_differences_for_every_kind() {
    for kind in LossKind::ALL {
        let errs = check_loss(kind, 100, 11, &SmoothingConfig::default()).unwrap();
        let worst = errs.iter().cloned().fold(0.0, f64::max);
        assert!(worst < LOSS_TOLERANCE, "{kind}: {worst}");
    }
}

#[test]
fn finite_differences_with_sharp_smoothing() {
    let smooth = SmoothingConfig::new(3.0).unwrap();
    for kind in [LossKind::RmjPairwise, LossKind::RmjDiscrete, LossKind::RmjTopK] {
        let errs = check_loss(kind, 50, 12, &smooth).unwrap();
        assert!(errs.iter().all(|&e| e < LOSS_TOLERANCE), "{kind}");
    }
}

#[test]
fn mnl_discrete_is_negative_log_choice_probability() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let vals: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
        let slate = slate_from(&vals);
        let w = ItemId(rng.random_range(0..5));
        let obs = ChoiceObservation::new(prompt(), Assortment::from_ids(0..5).unwrap(), w, None).unwrap();
        let loss = mnl_po_discrete_loss(&slate, &obs).unwrap().value;
        let p = mnl_choice_prob(&as_utilities(&slate), &obs.assortment, w).unwrap();
        assert!((loss + p.ln()).abs() < 1e-12);
    }
}

#[test]
fn hard_loss_counts_violations() {
    let obs = Observation::Choice(
        ChoiceObservation::new(prompt(), Assortment::from_ids(0..3).unwrap(), ItemId(2), Some(0.5)).unwrap(),
    );
    let worst = hard_rmj_loss(&slate_from(&[1.0, 0.5, 0.0]), &obs, LossKind::RmjDiscrete).unwrap();
    assert!((worst.value - 2.0 * 2f64.ln()).abs() < 1e-15);
    let best = hard_rmj_loss(&slate_from(&[0.0, 0.5, 1.0]), &obs, LossKind::RmjDiscrete).unwrap();
    assert_eq!(best.value, 0.0);
    let tied = hard_rmj_loss(&slate_from(&[1.0, 1.0, 1.0]), &obs, LossKind::RmjDiscrete).unwrap();
    assert_eq!(tied.value, 0.0);
    assert!(grad_vec(&worst).iter().all(|&g| g == 0.0));
}

#[test]
fn sharp_smoothing_approaches_hard_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let smooth = SmoothingConfig::new(100.0).unwrap();
    let mut checked = 0;
    while checked < 100 {
        let kind = [LossKind::RmjPairwise, LossKind::RmjDiscrete, LossKind::RmjTopK][checked % 3];
        let (slate, obs) = random_loss_instance(kind, &mut rng).unwrap();
        let vals: Vec<f64> = slate.rewards().values().copied().collect();
        let separated = vals
            .iter()
            .enumerate()
            .all(|(i, a)| vals[i + 1..].iter().all(|b| (a - b).abs() >= 0.1));
        if !separated {
            continue;
        }
        let soft = kind.evaluate(&slate, &obs, &smooth).unwrap().value;
        let hard = hard_rmj_loss(&slate, &obs, kind).unwrap().value;
        assert!((soft - hard).abs() < 1e-3, "{kind}: {soft} vs {hard}");
        checked += 1;
    }
}

#[test]
fn smoothing_converges_as_temperature_grows() {
    let slate = slate_from(&[0.3, -0.2, 0.9, 0.1]);
    let obs = topk_obs(4, &[1, 2], Some(0.3));
    let hard = hard_rmj_loss(&slate, &obs, LossKind::RmjTopK).unwrap().value;
    let gaps: Vec<f64> = [1.0, 10.0, 100.0, 1000.0]
        .iter()
        .map(|&g| {
            let v = LossKind::RmjTopK.evaluate(&slate, &obs, &SmoothingConfig::new(g).unwrap()).unwrap().value;
            (v - hard).abs()
        })
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] <= w[0]) && gaps[1] < gaps[0], "{gaps:?}");
    assert!(gaps[3] < 1e-12);
}

#[test]
fn rmj_discrete_saturates_when_winner_dominates() {
    let obs = Observation::Choice(
        ChoiceObservation::new(prompt(), Assortment::from_ids(0..4).unwrap(), ItemId(1), Some(0.5)).unwrap(),
    );
    let v = LossKind::RmjDiscrete
        .evaluate(&slate_from(&[0.0, 10.0, 0.0, 0.0]), &obs, &SmoothingConfig::default())
        .unwrap()
        .value;
    assert!(v < 1e-3 * 2f64.ln() * 3.0);
}

#[test]
fn topk_adjacent_terms_carry_position_weights() {
    // equal rewards: each σ'(0)=1/4, adjacent pair (y1,y2) weighted by |S|−1
    let slate = slate_from(&[0.0; 4]);
    let obs = topk_obs(4, &[0, 1], Some(0.5));
    let e = LossKind::RmjTopK.evaluate(&slate, &obs, &SmoothingConfig::default()).unwrap();
    let c = 2f64.ln() * 0.25;
    assert!((e.reward_grad[&ItemId(0)] - (-3.0 * c)).abs() < 1e-15);
    assert!((e.reward_grad[&ItemId(1)] - (3.0 * c - 2.0 * c)).abs() < 1e-15);
    assert!((e.reward_grad[&ItemId(2)] - c).abs() < 1e-15);
    assert!((e.reward_grad[&ItemId(3)] - c).abs() < 1e-15);
}

#[test]
fn dpo_gradient_matches_closed_form() {
    let slate = slate_from(&[0.4, 1.3]);
    let obs = PairwiseObservation::new(prompt(), ItemId(0), ItemId(1), None).unwrap();
    let e = dpo_loss(&slate, &obs).unwrap();
    let s = 1.0 / (1.0 + (-(1.3f64 - 0.4)).exp());
    assert!((e.reward_grad[&ItemId(0)] + s).abs() < 1e-15);
    assert!((e.reward_grad[&ItemId(1)] - s).abs() < 1e-15);
}

#[test]
fn missing_dispersion_is_rejected() {
    let obs = topk_obs(3, &[0], None);
    let err = LossKind::RmjTopK.evaluate(&slate_from(&[0.0; 3]), &obs, &SmoothingConfig::default());
    assert!(matches!(err, Err(rcpo::RcpoError::MissingDispersion)));
    let filled = obs.with_default_dispersion(Some(0.4)).unwrap();
    assert_eq!(filled.dispersion(), Some(0.4));
}

#[test]
fn batch_edge_cases() {
    let smooth = SmoothingConfig::default();
    assert!(matches!(batch_loss(LossKind::Dpo, &[], &smooth), Err(rcpo::RcpoError::EmptyBatch)));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let one = random_loss_instance(LossKind::MnlTopK, &mut rng).unwrap();
    let single = LossKind::MnlTopK.evaluate(&one.0, &one.1, &smooth).unwrap();
    let b1 = batch_loss(LossKind::MnlTopK, std::slice::from_ref(&one), &smooth).unwrap();
    assert_eq!(b1.value, single.value);
    let b2 = batch_loss(LossKind::MnlTopK, &[one.clone(), one.clone()], &smooth).unwrap();
    assert!((b2.value - b1.value).abs() < 1e-15);
}

#[test]
fn batch_is_order_independent() {
    let smooth = SmoothingConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for kind in LossKind::ALL {
        let mut batch: Vec<_> = (0..200)
            .map(|i| {
                let (slate, obs) = random_loss_instance(kind, &mut rng).unwrap();
                let obs = match obs {
                    Observation::Pairwise(mut p) => {
                        p.prompt = PromptId(format!("p{}", i % 7));
                        Observation::Pairwise(p)
                    }
                    Observation::Choice(mut c) => {
                        c.prompt = PromptId(format!("p{}", i % 7));
                        Observation::Choice(c)
                    }
                    Observation::TopK(mut t) => {
                        t.prompt = PromptId(format!("p{}", i % 7));
                        Observation::TopK(t)
                    }
                };
                (slate, obs)
            })
            .collect();
        let a = batch_loss(kind, &batch, &smooth).unwrap();
        for i in (1..batch.len()).rev() {
            batch.swap(i, rng.random_range(0..=i));
        }
        let b = batch_loss(kind, &batch, &smooth).unwrap();
        assert!((a.value - b.value).abs() < 1e-12, "{kind}");
        assert_eq!(a.reward_grad.len(), b.reward_grad.len());
        for (k, v) in &a.reward_grad {
            assert!((v - b.reward_grad[k]).abs() < 1e-12);
        }
    }
}

fn kind_strategy() -> impl Strategy<Value = LossKind> {
    prop::sample::select(LossKind::ALL.to_vec())
}

proptest! {
    #[test]
    fn shift_invariance(kind in kind_strategy(), seed in any::<u64>(), c in -50.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (slate, obs) = random_loss_instance(kind, &mut rng).unwrap();
        let smooth = SmoothingConfig::default();
        let a = kind.evaluate(&slate, &obs, &smooth).unwrap();
        let b = kind.evaluate(&slate.shifted(c), &obs, &smooth).unwrap();
        prop_assert!((a.value - b.value).abs() < 1e-12);
        for (x, y) in grad_vec(&a).iter().zip(grad_vec(&b)) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_sum_to_zero(kind in kind_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (slate, obs) = random_loss_instance(kind, &mut rng).unwrap();
        let e = kind.evaluate(&slate, &obs, &SmoothingConfig::default()).unwrap();
        prop_assert!(e.reward_grad.values().sum::<f64>().abs() < 1e-12);
        prop_assert!(e.value >= 0.0);
    }

    #[test]
    fn raising_the_winner_lowers_the_loss(kind in kind_strategy(), seed in any::<u64>(), bump in 0.01f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (slate, obs) = random_loss_instance(kind, &mut rng).unwrap();
        let winner = match &obs {
            Observation::Pairwise(p) => p.winner,
            Observation::Choice(c) => c.winner,
            Observation::TopK(t) => t.ranking.top(),
        };
        let smooth = SmoothingConfig::default();
        let before = kind.evaluate(&slate, &obs, &smooth).unwrap().value;
        let raised = slate.with_reward(winner, slate.reward(winner).unwrap() + bump);
        let after = kind.evaluate(&raised, &obs, &smooth).unwrap().value;
        prop_assert!(after < before, "{} !< {}", after, before);
    }

    #[test]
    fn mnl_topk_loss_is_negative_log_probability(vals in prop::collection::vec(-4.0f64..4.0, 2..7), k in 1usize..7, seed in any::<u64>()) {
        let n = vals.len();
        let k = k.min(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<u32> = (0..n as u32).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let slate = slate_from(&vals);
        let obs = topk_obs(n as u32, &order[..k], None);
        let t = obs.as_topk().unwrap();
        let loss = mnl_po_topk_loss(&slate, &t).unwrap().value;
        let p = mnl_topk_prob(&as_utilities(&slate), &t.assortment, &t.ranking).unwrap();
        prop_assert!(((-loss).exp() - p).abs() < 1e-12);
    }

    #[test]
    fn reduction_chain(a in -3.0f64..3.0, b in -3.0f64..3.0, phi in 0.01f64..0.99, gamma in 0.1f64..5.0) {
        let slate = RewardSlate::new(BTreeMap::from([(ItemId(0), a), (ItemId(1), b)]), 1.0).unwrap();
        let smooth = SmoothingConfig::new(gamma).unwrap();
        let top = topk_obs(2, &[1], Some(phi));
        let choice = Observation::Choice(top.as_choice().unwrap());
        let pair = Observation::Pairwise(choice.as_pairwise().unwrap());
        let vals = |kind: LossKind, obs: &Observation| kind.evaluate(&slate, obs, &smooth).unwrap();
        let pairs = [
            (vals(LossKind::MnlTopK, &top), vals(LossKind::MnlDiscrete, &choice)),
            (vals(LossKind::MnlDiscrete, &choice), vals(LossKind::Dpo, &pair)),
            (vals(LossKind::RmjTopK, &top), vals(LossKind::RmjDiscrete, &choice)),
            (vals(LossKind::RmjDiscrete, &choice), vals(LossKind::RmjPairwise, &pair)),
        ];
        for (x, y) in pairs {
            prop_assert!((x.value - y.value).abs() < 1e-12);
            for (g, h) in grad_vec(&x).iter().zip(grad_vec(&y)) {
                prop_assert!((g - h).abs() < 1e-12);
            }
        }
    }
}
