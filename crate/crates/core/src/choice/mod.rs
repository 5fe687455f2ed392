//! Probability kernels for MNL and Mallows-RMJ choice.
//!
//! Every closed form here has an independent check: the MNL forms against a
//! seeded Gumbel-max Monte Carlo estimate of the random-utility integral, the
//! Mallows-RMJ forms against exhaustive enumeration of ordered top-k lists.

mod enumerate;
mod mnl;
mod oracle;
mod rmj;
mod types;

pub use enumerate::{enumerate_topk, ENUMERATION_CAP};
pub use mnl::{mnl_choice_log_prob, mnl_choice_prob, mnl_topk_log_prob, mnl_topk_prob};
pub use oracle::{gumbel, rum_choice_prob_mc, rum_topk_prob_mc, McEstimate};
pub use rmj::{
    psi, rmj_choice_prob, rmj_pairwise_prob, rmj_rank_distance, rmj_topk_distance,
    rmj_topk_log_prob, rmj_topk_prob,
};
pub use types::{
    check_dispersion, Assortment, GumbelOracleConfig, ItemId, MallowsRmjModel, TopKRanking,
    UtilityVector,
};
