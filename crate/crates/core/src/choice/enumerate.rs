use crate::choice::{Assortment, ItemId, TopKRanking};
use crate::error::{RcpoError, Result};

/// Largest assortment the exhaustive enumeration accepts (8! = 40,320 lists).
pub const ENUMERATION_CAP: usize = 8;

/// All ordered k-lists of distinct items of `s`, lexicographic in assortment
/// positions.
pub fn enumerate_topk(s: &Assortment, k: usize) -> Result<Vec<TopKRanking>> {
    if s.len() > ENUMERATION_CAP {
        return Err(RcpoError::AssortmentTooLarge {
            size: s.len(),
            cap: ENUMERATION_CAP,
        });
    }
    if k == 0 || k > s.len() {
        return Err(RcpoError::InvalidArgument(format!(
            "k = {k} must lie in 1..={}",
            s.len()
        )));
    }
    let mut out = Vec::new();
    let mut used = vec![false; s.len()];
    let mut current = Vec::with_capacity(k);
    extend(s.items(), k, &mut used, &mut current, &mut out);
    Ok(out)
}

fn extend(
    items: &[ItemId],
    k: usize,
    used: &mut [bool],
    current: &mut Vec<ItemId>,
    out: &mut Vec<TopKRanking>,
) {
    if current.len() == k {
        out.push(TopKRanking::new(current.clone()).expect("distinct by construction"));
        return;
    }
    for i in 0..items.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        current.push(items[i]);
        extend(items, k, used, current, out);
        current.pop();
        used[i] = false;
    }
}
