//! Seeded toy alignment setup shared by the estimation tests and the
//! acceptance suite.
#![allow(dead_code)]

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcpo::datagen::{sample_responses, DatasetRecord, ResponseRecord};
use rcpo::estimation::HeldoutPair;
use rcpo::{ItemId, MarkovPolicy, PromptId, ResponseSequence};
use rcpo::policy::Vocab;

pub struct ToyWorld {
    pub reference: MarkovPolicy,
    pub prompts: Vec<PromptId>,
    /// Per prompt, the responses indexed by item id.
    pub responses: Vec<Vec<ResponseSequence>>,
    /// Per prompt, item ids from best to worst.
    pub order: Vec<Vec<ItemId>>,
}

pub struct ToyConfig {
    pub vocab: usize,
    pub prompts: usize,
    pub responses: usize,
    pub length: usize,
    pub reference_scale: f64,
    pub records_per_prompt: usize,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            vocab: 8,
            prompts: 20,
            responses: 5,
            length: 4,
            reference_scale: 1.0,
            records_per_prompt: 30,
            seed: 2024,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Feedback {
    Pairwise,
    SingleBest,
    TopTwo,
}

impl ToyWorld {
    pub fn build(cfg: &ToyConfig) -> ToyWorld {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let prompts: Vec<PromptId> = (0..cfg.prompts).map(|i| PromptId(format!("prompt-{i:02}"))).collect();
        let reference = MarkovPolicy::random(Vocab::new(cfg.vocab).unwrap(), &prompts, cfg.reference_scale, &mut rng);
        let mut responses = Vec::new();
        let mut order = Vec::new();
        for p in &prompts {
            let drawn = sample_responses(&reference, p, cfg.responses, cfg.length, &mut rng).unwrap();
            assert!(!drawn.duplicates, "toy world needs distinct responses");
            responses.push(drawn.responses);
            let utilities: Vec<f64> = (0..cfg.responses).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut ids: Vec<ItemId> = (0..cfg.responses as u32).map(ItemId).collect();
            ids.sort_by(|a, b| utilities[b.0 as usize].total_cmp(&utilities[a.0 as usize]));
            order.push(ids);
        }
        ToyWorld {
            reference,
            prompts,
            responses,
            order,
        }
    }

    fn rank_of(&self, p: usize, item: ItemId) -> usize {
        self.order[p].iter().position(|&x| x == item).unwrap()
    }

    /// Noise-free feedback following the ground-truth order; pairwise records
    /// use two-item assortments, the others random sizes in 2..=|responses|.
    pub fn dataset(&self, feedback: Feedback, per_prompt: usize, seed: u64) -> Vec<DatasetRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.responses[0].len();
        let mut out = Vec::new();
        for (p, prompt) in self.prompts.iter().enumerate() {
            for _ in 0..per_prompt {
                let size = match feedback {
                    Feedback::Pairwise => 2,
                    _ => rng.random_range(2..=n),
                };
                let mut assortment: Vec<ItemId> = sample(&mut rng, n, size).into_iter().map(|i| ItemId(i as u32)).collect();
                assortment.sort();
                let mut ranked = assortment.clone();
                ranked.sort_by_key(|&it| self.rank_of(p, it));
                let k = match feedback {
                    Feedback::TopTwo => 2,
                    _ => 1,
                };
                ranked.truncate(k);
                out.push(DatasetRecord {
                    prompt_id: prompt.clone(),
                    items: assortment
                        .iter()
                        .map(|&it| ResponseRecord {
                            item_id: it,
                            tokens: self.responses[p][it.0 as usize].tokens().to_vec(),
                        })
                        .collect(),
                    assortment,
                    ranking: ranked,
                    dispersion: None,
                });
            }
        }
        out
    }

    /// Every ground-truth ordered pair of responses, for every prompt.
    pub fn heldout(&self) -> Vec<HeldoutPair> {
        let mut out = Vec::new();
        for (p, prompt) in self.prompts.iter().enumerate() {
            let ord = &self.order[p];
            for i in 0..ord.len() {
                for j in i + 1..ord.len() {
                    out.push(HeldoutPair {
                        prompt: prompt.clone(),
                        better: self.responses[p][ord[i].0 as usize].clone(),
                        worse: self.responses[p][ord[j].0 as usize].clone(),
                    });
                }
            }
        }
        out
    }
}
