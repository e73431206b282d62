use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::index::InvertedIndex;
use crate::rng;

use super::SyntheticPair;

/// Picks one document uniformly from the BM25 top `pool_depth` for the
/// pair's query, excluding the pair's own document. `None` when nothing is
/// left after the exclusion. The draw depends only on `seed`, the doc id and
/// the query text.
pub fn mine_negative(
    pair: &SyntheticPair,
    index: &InvertedIndex,
    pool_depth: usize,
    seed: u64,
) -> Option<String> {
    let pool: Vec<String> = index
        .search_topk(&pair.query, pool_depth)
        .into_iter()
        .map(|h| h.doc_id)
        .filter(|id| *id != pair.doc_id)
        .collect();
    if pool.is_empty() {
        return None;
    }
    let mut key = Vec::with_capacity(pair.doc_id.len() + 1 + pair.query.len());
    key.extend_from_slice(pair.doc_id.as_bytes());
    key.push(0);
    key.extend_from_slice(pair.query.as_bytes());
    let mut r = rng::substream(seed, "mine-negative", &key);
    let pick = rng::index(&mut r, pool.len());
    pool.into_iter().nth(pick)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NegativeMining {
    /// Positive doc id → mined negative doc id, or `None` for the
    /// no-negative signal.
    pub negatives: BTreeMap<String, Option<String>>,
    pub no_negative: usize,
}

pub fn mine_negatives(
    pairs: &[SyntheticPair],
    index: &InvertedIndex,
    pool_depth: usize,
    seed: u64,
) -> NegativeMining {
    let mined: Vec<Option<String>> = pairs
        .par_iter()
        .map(|p| mine_negative(p, index, pool_depth, seed))
        .collect();
    let no_negative = mined.iter().filter(|m| m.is_none()).count();
    NegativeMining {
        negatives: pairs.iter().map(|p| p.doc_id.clone()).zip(mined).collect(),
        no_negative,
    }
}
