use crate::corpus::Corpus;
use crate::gateway::ModelGateway;
use crate::scoring::{score_items, ScoreCache, ScoreItem};
use crate::topk::{top_k, RankKey};

use super::{SynthError, SyntheticPair};

/// The `keep` best pairs by `signal`, best first; ties go to the smaller doc
/// id, then to the earlier position.
pub fn select_top_pairs(
    pairs: &[SyntheticPair],
    keep: usize,
    signal: impl Fn(&SyntheticPair) -> f64,
) -> Vec<SyntheticPair> {
    let keys = pairs.iter().enumerate().map(|(i, p)| RankKey {
        score: signal(p),
        tie: (p.doc_id.as_str(), i),
    });
    top_k(keys, keep)
        .into_iter()
        .map(|k| pairs[k.tie.1].clone())
        .collect()
}

/// Consistency filter: scores every pair with the gateway's relevance model
/// (query against the document's flat text) and keeps the `keep_top`
/// highest.
pub fn filter_v2(
    pairs: &[SyntheticPair],
    corpus: &Corpus,
    gateway: &dyn ModelGateway,
    keep_top: usize,
    cache: &mut ScoreCache,
) -> Result<Vec<SyntheticPair>, SynthError> {
    if pairs.is_empty() {
        return Err(SynthError::EmptyInput("pairs"));
    }
    if keep_top == 0 {
        return Err(SynthError::Config("keep_top must be positive".into()));
    }
    let texts: Vec<String> = pairs
        .iter()
        .map(|p| corpus.flat_text(&p.doc_id))
        .collect::<Result<_, _>>()?;
    let items: Vec<ScoreItem<'_>> = pairs
        .iter()
        .zip(&texts)
        .map(|(p, t)| ScoreItem {
            query: &p.query,
            doc_id: &p.doc_id,
            doc_text: t,
        })
        .collect();
    let scores = score_items(gateway, cache, &items)?;
    let scored: Vec<SyntheticPair> = pairs
        .iter()
        .zip(scores)
        .map(|(p, s)| SyntheticPair {
            score: Some(s),
            ..p.clone()
        })
        .collect();
    Ok(select_top_pairs(&scored, keep_top, |p| p.score.expect("scored")))
}

/// Log-probability filter: keeps the `keep_top` pairs whose generation was
/// most likely under the generator.
pub fn filter_v1(pairs: &[SyntheticPair], keep_top: usize) -> Result<Vec<SyntheticPair>, SynthError> {
    if keep_top == 0 {
        return Err(SynthError::Config("keep_top must be positive".into()));
    }
    if let Some(p) = pairs.iter().find(|p| p.mean_logprob.is_none()) {
        return Err(SynthError::MissingLogprob(p.doc_id.clone()));
    }
    Ok(select_top_pairs(pairs, keep_top, |p| {
        p.mean_logprob.expect("checked above")
    }))
}
