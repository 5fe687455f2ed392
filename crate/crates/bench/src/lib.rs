//! Fixtures shared by the kernel benchmarks.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcpo::datagen::{generate, sample_responses, DatasetRecord, GeneratorConfig, GroundTruth, ResponseSource};
use rcpo::policy::Vocab;
use rcpo::{Assortment, ItemId, MallowsRmjModel, MarkovPolicy, PromptId, TopKRanking, UtilityVector};

/// Identity-centred Mallows model with a shuffled assortment of size `n` and
/// its first `k` items as the ranking.
pub fn rmj_instance(n: u32, k: usize, seed: u64) -> (MallowsRmjModel, Assortment, TopKRanking) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items: Vec<ItemId> = (0..n).map(ItemId).collect();
    for i in (1..items.len()).rev() {
        items.swap(i, rng.random_range(0..=i));
    }
    let model = MallowsRmjModel::identity(n, 0.6).expect("valid model");
    let ranking = TopKRanking::new(items[..k].to_vec()).expect("distinct items");
    (model, Assortment::new(items).expect("distinct items"), ranking)
}

pub fn random_utilities(n: u32, seed: u64) -> UtilityVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| (ItemId(i), rng.random_range(-2.0..2.0))).collect()
}

/// Reference policy and a top-2 dataset over `prompts` prompts with five
/// sampled responses each.
pub fn training_set(prompts: usize, records: usize, seed: u64) -> (MarkovPolicy, Vec<DatasetRecord>) {
    let ids: Vec<PromptId> = (0..prompts).map(|i| PromptId(format!("p{i}"))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reference = MarkovPolicy::random(Vocab::new(8).expect("vocab"), &ids, 1.0, &mut rng);
    let mut bank = BTreeMap::new();
    for p in &ids {
        let drawn = sample_responses(&reference, p, 5, 4, &mut rng).expect("responses");
        bank.insert(p.clone(), drawn.responses);
    }
    let cfg = GeneratorConfig {
        truth: GroundTruth::Mnl(random_utilities(5, seed)),
        universe: (0..5).map(ItemId).collect(),
        assortment_size: 4,
        k: 2,
        count: records,
        seed,
        prompts: ids,
        responses: ResponseSource::Bank(bank),
        emit_dispersion: false,
    };
    (reference, generate(&cfg).expect("valid generator"))
}
