//! nDCG@k with linear gain and `log2(rank + 1)` discount, the convention of
//! trec_eval's `ndcg_cut` measure.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Qrels, Run};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("cutoff k must be at least 1")]
    ZeroCutoff,
    #[error("no document has a positive grade; nDCG is undefined")]
    NoRelevant,
    #[error("no query in the qrels has a positive judgment")]
    NothingToScore,
}

/// nDCG@k of `ranking` against `grades`.
///
/// DCG sums `grade / log2(i + 1)` over the first `k` ranks (1-based `i`);
/// the ideal DCG does the same over all grades sorted descending. Documents
/// missing from `grades` have grade 0.
pub fn ndcg_at_k<'a, I>(
    ranking: I,
    grades: &BTreeMap<String, u32>,
    k: usize,
) -> Result<f64, MetricsError>
where
    I: IntoIterator<Item = &'a str>,
{
    if k == 0 {
        return Err(MetricsError::ZeroCutoff);
    }
    let mut ideal: Vec<u32> = grades.values().copied().filter(|&g| g > 0).collect();
    if ideal.is_empty() {
        return Err(MetricsError::NoRelevant);
    }
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(ideal.into_iter().take(k));
    let dcg = dcg(
        ranking
            .into_iter()
            .take(k)
            .map(|doc| grades.get(doc).copied().unwrap_or(0)),
    );
    Ok(dcg / idcg)
}

fn dcg(gains: impl Iterator<Item = u32>) -> f64 {
    gains
        .enumerate()
        .map(|(i, g)| f64::from(g) / ((i + 2) as f64).log2())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub per_query: BTreeMap<String, f64>,
    pub mean: f64,
    pub judged_query_count: usize,
}

/// Scores every qrels query that has at least one positive grade. Such
/// queries missing from the run score 0; run queries absent from the qrels
/// are ignored.
pub fn evaluate_run(run: &Run, qrels: &Qrels, k: usize) -> Result<EvalResult, MetricsError> {
    if k == 0 {
        return Err(MetricsError::ZeroCutoff);
    }
    let mut per_query = BTreeMap::new();
    for (qid, grades) in qrels.iter() {
        let ranking = run.get(qid).unwrap_or(&[]);
        match ndcg_at_k(ranking.iter().map(|d| d.doc_id.as_str()), grades, k) {
            Ok(v) => {
                per_query.insert(qid.clone(), v);
            }
            Err(MetricsError::NoRelevant) => {}
            Err(e) => return Err(e),
        }
    }
    if per_query.is_empty() {
        return Err(MetricsError::NothingToScore);
    }
    let mean = per_query.values().sum::<f64>() / per_query.len() as f64;
    Ok(EvalResult {
        judged_query_count: per_query.len(),
        per_query,
        mean,
    })
}
