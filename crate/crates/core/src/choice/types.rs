use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{RcpoError, Result};

/// Opaque identifier of one item (response) in a universe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(pub u32);

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for ItemId {
    fn from(v: u32) -> Self {
        ItemId(v)
    }
}

/// An ordered set of distinct candidate items.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ItemId>", into = "Vec<ItemId>")]
pub struct Assortment {
    items: Vec<ItemId>,
}

impl Assortment {
    pub fn new(items: Vec<ItemId>) -> Result<Self> {
        if items.is_empty() {
            return Err(RcpoError::InvalidAssortment("assortment is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for &it in &items {
            if !seen.insert(it) {
                return Err(RcpoError::InvalidAssortment(format!("item {it} appears twice")));
            }
        }
        Ok(Assortment { items })
    }

    pub fn from_ids<I: IntoIterator<Item = u32>>(ids: I) -> Result<Self> {
        Self::new(ids.into_iter().map(ItemId).collect())
    }

    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, item: ItemId) -> bool {
        self.items.contains(&item)
    }

    pub(crate) fn require(&self, item: ItemId) -> Result<()> {
        if self.contains(item) {
            Ok(())
        } else {
            Err(RcpoError::ItemNotInAssortment(item))
        }
    }
}

impl TryFrom<Vec<ItemId>> for Assortment {
    type Error = RcpoError;
    fn try_from(v: Vec<ItemId>) -> Result<Self> {
        Assortment::new(v)
    }
}

impl From<Assortment> for Vec<ItemId> {
    fn from(a: Assortment) -> Self {
        a.items
    }
}

/// A top-k list, position 0 most preferred.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<ItemId>", into = "Vec<ItemId>")]
pub struct TopKRanking {
    ranked: Vec<ItemId>,
}

impl TopKRanking {
    pub fn new(ranked: Vec<ItemId>) -> Result<Self> {
        if ranked.is_empty() {
            return Err(RcpoError::InvalidRanking("ranking is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for &it in &ranked {
            if !seen.insert(it) {
                return Err(RcpoError::InvalidRanking(format!("item {it} ranked twice")));
            }
        }
        Ok(TopKRanking { ranked })
    }

    pub fn from_ids<I: IntoIterator<Item = u32>>(ids: I) -> Result<Self> {
        Self::new(ids.into_iter().map(ItemId).collect())
    }

    pub fn items(&self) -> &[ItemId] {
        &self.ranked
    }

    pub fn k(&self) -> usize {
        self.ranked.len()
    }

    pub fn top(&self) -> ItemId {
        self.ranked[0]
    }

    /// Checks that every ranked item belongs to `s` (which also bounds `k`).
    pub fn validate_against(&self, s: &Assortment) -> Result<()> {
        for &it in &self.ranked {
            if !s.contains(it) {
                return Err(RcpoError::InvalidRanking(format!(
                    "item {it} is not in the assortment"
                )));
            }
        }
        Ok(())
    }

    /// Items of `s` that are not in the ranking, in assortment order.
    pub fn unranked<'a>(&'a self, s: &'a Assortment) -> impl Iterator<Item = ItemId> + 'a {
        s.items().iter().copied().filter(move |it| !self.ranked.contains(it))
    }
}

impl TryFrom<Vec<ItemId>> for TopKRanking {
    type Error = RcpoError;
    fn try_from(v: Vec<ItemId>) -> Result<Self> {
        TopKRanking::new(v)
    }
}

impl From<TopKRanking> for Vec<ItemId> {
    fn from(r: TopKRanking) -> Self {
        r.ranked
    }
}

/// Mean utilities per item.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UtilityVector {
    values: BTreeMap<ItemId, f64>,
}

impl UtilityVector {
    pub fn new(values: BTreeMap<ItemId, f64>) -> Result<Self> {
        if let Some((id, v)) = values.iter().find(|(_, v)| !v.is_finite()) {
            return Err(RcpoError::InvalidArgument(format!("utility of item {id} is {v}")));
        }
        Ok(UtilityVector { values })
    }

    /// Utilities for items `0..n` from a slice.
    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(
            values
                .iter()
                .enumerate()
                .map(|(i, &v)| (ItemId(i as u32), v))
                .collect(),
        )
    }

    pub fn get(&self, item: ItemId) -> Result<f64> {
        self.values
            .get(&item)
            .copied()
            .ok_or(RcpoError::UtilityMissing(item))
    }

    pub fn set(&mut self, item: ItemId, value: f64) {
        self.values.insert(item, value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (ItemId, f64)> + '_ {
        self.values.iter().map(|(&k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn shifted(&self, c: f64) -> Self {
        UtilityVector {
            values: self.values.iter().map(|(&k, &v)| (k, v + c)).collect(),
        }
    }

    pub(crate) fn on(&self, s: &Assortment) -> Result<Vec<f64>> {
        s.items().iter().map(|&it| self.get(it)).collect()
    }
}

impl FromIterator<(ItemId, f64)> for UtilityVector {
    fn from_iter<T: IntoIterator<Item = (ItemId, f64)>>(iter: T) -> Self {
        UtilityVector {
            values: iter.into_iter().collect(),
        }
    }
}

pub fn check_dispersion(phi: f64) -> Result<f64> {
    if phi > 0.0 && phi < 1.0 {
        Ok(phi)
    } else {
        Err(RcpoError::DispersionOutOfRange(phi))
    }
}

/// Mallows model under the reverse-major-index distance: a central ranking
/// (best first) and a dispersion `φ ∈ (0,1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MallowsRmjModel {
    central: Vec<ItemId>,
    position: BTreeMap<ItemId, usize>,
    phi: f64,
}

impl MallowsRmjModel {
    /// `central_ranking[0]` is the best item and gets position 1.
    pub fn new(central_ranking: Vec<ItemId>, phi: f64) -> Result<Self> {
        check_dispersion(phi)?;
        if central_ranking.is_empty() {
            return Err(RcpoError::InvalidRanking("central ranking is empty".into()));
        }
        let mut position = BTreeMap::new();
        for (i, &it) in central_ranking.iter().enumerate() {
            if position.insert(it, i + 1).is_some() {
                return Err(RcpoError::InvalidRanking(format!(
                    "item {it} appears twice in the central ranking"
                )));
            }
        }
        Ok(MallowsRmjModel {
            central: central_ranking,
            position,
            phi,
        })
    }

    /// Central ranking `0 ≻ 1 ≻ … ≻ n-1`.
    pub fn identity(n: u32, phi: f64) -> Result<Self> {
        Self::new((0..n).map(ItemId).collect(), phi)
    }

    pub fn central_ranking(&self) -> &[ItemId] {
        &self.central
    }

    pub fn dispersion(&self) -> f64 {
        self.phi
    }

    pub fn with_dispersion(&self, phi: f64) -> Result<Self> {
        check_dispersion(phi)?;
        Ok(MallowsRmjModel {
            phi,
            ..self.clone()
        })
    }

    /// `μ0⁻¹(item)`, 1 = best.
    pub fn position(&self, item: ItemId) -> Result<usize> {
        self.position
            .get(&item)
            .copied()
            .ok_or(RcpoError::ItemOutsideUniverse(item))
    }

    pub fn universe_size(&self) -> usize {
        self.central.len()
    }
}

/// Monte Carlo oracle settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GumbelOracleConfig {
    pub sample_count: usize,
    pub seed: u64,
}

impl GumbelOracleConfig {
    pub fn new(sample_count: usize, seed: u64) -> Result<Self> {
        if sample_count == 0 {
            return Err(RcpoError::InvalidArgument("sample_count must be at least 1".into()));
        }
        Ok(GumbelOracleConfig { sample_count, seed })
    }
}
