//! Naive reference implementations used as test oracles. They are written
//! directly from the formulas, without sharing code with the library.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeMap;

/// Scores every document by looping over all docs and all query terms, then
/// sorts by score descending and doc id ascending. Only positive scores are
/// kept.
pub fn brute_bm25(
    docs: &[(String, Vec<String>)],
    query: &[String],
    k1: f64,
    b: f64,
) -> Vec<(String, f64)> {
    let n = docs.len();
    if n == 0 {
        return Vec::new();
    }
    let mut total = 0u64;
    for (_, terms) in docs {
        total += terms.len() as u64;
    }
    let avgdl = total as f64 / n as f64;
    let mut out = Vec::new();
    for (id, terms) in docs {
        let dl = terms.len() as f64;
        let mut score = 0.0;
        for q in query {
            let mut tf = 0u32;
            for t in terms {
                if t == q {
                    tf += 1;
                }
            }
            if tf == 0 {
                continue;
            }
            let mut df = 0usize;
            for (_, other) in docs {
                if other.iter().any(|t| t == q) {
                    df += 1;
                }
            }
            let idf = (1.0 + (n as f64 - df as f64 + 0.5) / (df as f64 + 0.5)).ln();
            let tf = tf as f64;
            score += idf * (tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl)));
        }
        if score > 0.0 {
            out.push((id.clone(), score));
        }
    }
    out.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then_with(|| x.0.cmp(&y.0)));
    out
}

/// nDCG@k from the textbook definition.
pub fn brute_ndcg(ranking: &[String], grades: &BTreeMap<String, u32>, k: usize) -> f64 {
    let mut dcg = 0.0;
    for i in 0..ranking.len().min(k) {
        let g = *grades.get(&ranking[i]).unwrap_or(&0) as f64;
        dcg += g / ((i + 2) as f64).log2();
    }
    let mut ideal: Vec<u32> = grades.values().cloned().collect();
    ideal.sort();
    ideal.reverse();
    let mut idcg = 0.0;
    for i in 0..ideal.len().min(k) {
        idcg += ideal[i] as f64 / ((i + 2) as f64).log2();
    }
    dcg / idcg
}

/// Indices of the `keep` best items under score descending, doc id
/// ascending, then position ascending, found by sorting everything.
pub fn full_sort_prefix(items: &[(String, f64)], keep: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.sort_by(|&a, &b| {
        items[b]
            .1
            .partial_cmp(&items[a].1)
            .unwrap()
            .then_with(|| items[a].0.cmp(&items[b].0))
            .then_with(|| a.cmp(&b))
    });
    idx.truncate(keep);
    idx
}

pub mod gen {
    use inpars_core::Document;
    use rand::seq::IndexedRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// A vocabulary of `size` distinct lowercase words.
    pub fn vocab(size: usize) -> Vec<String> {
        (0..size)
            .map(|i| {
                let mut w = String::new();
                let mut x = i;
                loop {
                    w.push((b'a' + (x % 26) as u8) as char);
                    x /= 26;
                    if x == 0 {
                        break;
                    }
                }
                format!("w{w}")
            })
            .collect()
    }

    pub fn words(rng: &mut ChaCha8Rng, vocab: &[String], max_len: usize) -> Vec<String> {
        let len = rng.random_range(0..=max_len);
        (0..len).map(|_| vocab.choose(rng).unwrap().clone()).collect()
    }

    /// Up to `max_docs` documents over a small vocabulary, so scores tie
    /// often. Some documents are empty.
    pub fn corpus(rng: &mut ChaCha8Rng, max_docs: usize) -> Vec<Document> {
        let n = rng.random_range(1..=max_docs);
        let vocab = vocab(rng.random_range(2..=30));
        (0..n)
            .map(|i| {
                let title = if rng.random_bool(0.3) {
                    words(rng, &vocab, 3).join(" ")
                } else {
                    String::new()
                };
                Document::new(format!("doc{i:03}"), title, words(rng, &vocab, 25).join(" "))
            })
            .collect()
    }
}
