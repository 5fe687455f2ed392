//! Ranked-choice preference optimization.
//!
//! Preference optimization cast as maximum-likelihood estimation of a ranked
//! choice model whose item "utilities" are a policy's implicit rewards
//! `β·log(π_θ/π_ref)`. Two choice families are provided:
//!
//! | Family | Discrete choice | Top-k choice |
//! |--------|-----------------|--------------|
//! | MNL / Plackett-Luce | softmax over the assortment | sequential softmax product |
//! | Mallows-RMJ | `φ^d / (1+φ+…+φ^{|S|-1})` | `ψ(|S|-k,φ)/ψ(|S|,φ) · φ^d` |
//!
//! Module map:
//!
//! - [`choice`]: probability kernels plus enumeration and Gumbel Monte Carlo oracles.
//! - [`losses`]: the six training objectives, their hard (indicator) forms and reward gradients.
//! - [`policy`]: a per-prompt first-order Markov token policy with exact gradients
//!   and the entropy-based dispersion proxy.
//! - [`estimation`]: MLE fitting of both families and the full-batch trainer.
//! - [`datagen`]: seeded synthetic generators and the JSONL dataset codec.
//! - [`gradcheck`]: finite-difference harness shared by tests and the CLI.

pub mod choice;
pub mod datagen;
pub mod error;
pub mod estimation;
pub mod gradcheck;
pub mod losses;
pub mod numeric;
pub mod policy;

pub use choice::{
    Assortment, GumbelOracleConfig, ItemId, MallowsRmjModel, TopKRanking, UtilityVector,
};
pub use error::{RcpoError, Result};
pub use losses::{
    ChoiceObservation, LossEval, LossKind, Observation, PairwiseObservation, PromptId,
    RewardSlate, SmoothingConfig, TopKObservation,
};
pub use policy::{MarkovPolicy, ResponseSequence, TokenId};
