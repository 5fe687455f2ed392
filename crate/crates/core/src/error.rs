use thiserror::Error;

use crate::choice::ItemId;

pub type Result<T> = std::result::Result<T, RcpoError>;

#[derive(Debug, Error)]
pub enum RcpoError {
    #[error("item {0} is not in the assortment")]
    ItemNotInAssortment(ItemId),
    #[error("no utility defined for item {0}")]
    UtilityMissing(ItemId),
    #[error("no reward defined for item {0}")]
    MissingReward(ItemId),
    #[error("item {0} is outside the model universe")]
    ItemOutsideUniverse(ItemId),
    #[error("invalid ranking: {0}")]
    InvalidRanking(String),
    #[error("invalid assortment: {0}")]
    InvalidAssortment(String),
    #[error("dispersion {0} must lie strictly inside (0, 1)")]
    DispersionOutOfRange(f64),
    #[error("a pairwise comparison needs two distinct items, got {0} twice")]
    IdenticalItems(ItemId),
    #[error("assortment of size {size} exceeds the enumeration cap of {cap}")]
    AssortmentTooLarge { size: usize, cap: usize },
    #[error("Mallows-RMJ loss needs a dispersion but the observation carries none")]
    MissingDispersion,
    #[error("unknown prompt {0:?}")]
    UnknownPrompt(String),
    #[error("token {token} is outside the vocabulary of size {vocab}")]
    TokenOutOfVocab { token: u32, vocab: usize },
    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),
    #[error("response set is empty")]
    EmptyResponseSet,
    #[error("every response has length one so no transition entropy exists")]
    AllResponsesLengthOne,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("no observations supplied")]
    EmptyData,
    #[error("held-out pair list is empty")]
    EmptyHeldout,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("line {line}: malformed record: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("record {index} (line {line}): {message}")]
    InvalidRecord {
        index: usize,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl RcpoError {
    /// `true` for errors caused by unreadable or malformed input data rather
    /// than by bad parameters.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            RcpoError::Io(_)
                | RcpoError::Json(_)
                | RcpoError::MalformedLine { .. }
                | RcpoError::InvalidRecord { .. }
        )
    }
}
