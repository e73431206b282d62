//! Retrieve-then-rerank evaluation.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{write_run, Corpus, CorpusError, Qrels, Query, Run, ScoredDoc};
use crate::gateway::ModelGateway;
use crate::index::InvertedIndex;
use crate::metrics::{evaluate_run, EvalResult, MetricsError};
use crate::scoring::{score_items, ScoreCache, ScoreItem, ScoringError};

pub const BM25_TAG: &str = "bm25";
pub const NDCG_CUTOFF: usize = 10;

/// Queries handed to the gateway per `score_items` call, which bounds how
/// many document texts are held at once.
const RERANK_QUERY_CHUNK: usize = 16;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid rerank settings: {0}")]
    Config(String),
    #[error("run contains query `{0}` that is not in the query set")]
    UnknownQuery(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RerankSpec {
    /// BM25 candidates retrieved per query.
    pub depth: usize,
    /// Run tag written for the reranked run.
    pub scorer_tag: String,
    /// Keep the first-stage run in the returned outcome.
    pub keep_bm25_scores: bool,
}

impl Default for RerankSpec {
    fn default() -> Self {
        Self {
            depth: 1000,
            scorer_tag: "rerank".into(),
            keep_bm25_scores: true,
        }
    }
}

impl RerankSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.depth == 0 {
            return Err(EvalError::Config("depth must be at least 1".into()));
        }
        if self.scorer_tag.is_empty() || self.scorer_tag.chars().any(char::is_whitespace) {
            return Err(EvalError::Config(format!(
                "scorer tag `{}` must be one non-empty word",
                self.scorer_tag
            )));
        }
        Ok(())
    }
}

/// One BM25 ranking of `depth` documents per query.
pub fn retrieve_all(index: &InvertedIndex, queries: &[Query], depth: usize) -> Run {
    let rankings: Vec<(String, Vec<ScoredDoc>)> = queries
        .par_iter()
        .map(|q| (q.id.clone(), index.search_topk(&q.text, depth)))
        .collect();
    let mut run = Run::new();
    for (qid, docs) in rankings {
        run.insert(qid, docs).expect("search output is a valid ranking");
    }
    run
}

/// Rescores every candidate of `run` with the gateway and re-sorts each
/// ranking by the new score. Candidate sets are left unchanged.
pub fn rerank(
    run: &Run,
    queries: &[Query],
    corpus: &Corpus,
    gateway: &dyn ModelGateway,
    cache: &mut ScoreCache,
) -> Result<Run, EvalError> {
    let text: HashMap<&str, &str> = queries.iter().map(|q| (q.id.as_str(), q.text.as_str())).collect();
    let rankings: Vec<(&String, &Vec<ScoredDoc>)> = run.iter().collect();
    let mut out = Run::new();
    for chunk in rankings.chunks(RERANK_QUERY_CHUNK) {
        let mut keys: Vec<(&str, &str, &str)> = Vec::new();
        for (qid, docs) in chunk {
            let query = *text
                .get(qid.as_str())
                .ok_or_else(|| EvalError::UnknownQuery(qid.to_string()))?;
            keys.extend(docs.iter().map(|d| (qid.as_str(), query, d.doc_id.as_str())));
        }
        let texts: Vec<String> = keys
            .iter()
            .map(|(_, _, doc)| corpus.flat_text(doc))
            .collect::<Result<_, _>>()?;
        let items: Vec<ScoreItem<'_>> = keys
            .iter()
            .zip(&texts)
            .map(|((_, query, doc), t)| ScoreItem {
                query,
                doc_id: doc,
                doc_text: t,
            })
            .collect();
        let scores = score_items(gateway, cache, &items)?;
        let mut grouped: BTreeMap<&str, Vec<ScoredDoc>> = BTreeMap::new();
        for (qid, _) in chunk {
            grouped.insert(qid.as_str(), Vec::new());
        }
        for ((qid, _, doc), score) in keys.iter().zip(scores) {
            grouped.get_mut(qid).expect("query seeded").push(ScoredDoc::new(*doc, score));
        }
        for (qid, docs) in grouped {
            out.insert(qid, docs)?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub bm25: EvalResult,
    pub reranked: EvalResult,
    pub reranked_run: Run,
    /// Present when [`RerankSpec::keep_bm25_scores`] is set.
    pub bm25_run: Option<Run>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub bm25: f64,
    pub reranked: f64,
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset: String,
    pub bm25_ndcg10: f64,
    pub reranked_ndcg10: f64,
    pub per_query: BTreeMap<String, QueryMetrics>,
}

impl MetricsReport {
    pub fn new(dataset: impl Into<String>, bm25: &EvalResult, reranked: &EvalResult) -> Self {
        let per_query = bm25
            .per_query
            .iter()
            .map(|(qid, &b)| {
                let r = reranked.per_query.get(qid).copied().unwrap_or(0.0);
                (qid.clone(), QueryMetrics { bm25: b, reranked: r })
            })
            .collect();
        Self {
            dataset: dataset.into(),
            bm25_ndcg10: bm25.mean,
            reranked_ndcg10: reranked.mean,
            per_query,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).expect("metrics serialize");
        text.push('\n');
        std::fs::write(path, text).map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| EvalError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        })
    }
}

/// Everything the evaluation side needs besides the gateway.
pub struct EvalInputs<'a> {
    pub dataset: &'a str,
    pub index: &'a InvertedIndex,
    pub corpus: &'a Corpus,
    pub queries: &'a [Query],
    pub qrels: &'a Qrels,
}

/// BM25 retrieval, reranking and nDCG@10 of both runs. With `out_dir`,
/// writes `bm25.run`, `reranked.run` and `metrics.json` there.
pub fn evaluate_pipeline(
    inputs: &EvalInputs<'_>,
    gateway: &dyn ModelGateway,
    spec: &RerankSpec,
    cache: &mut ScoreCache,
    out_dir: Option<&Path>,
) -> Result<PipelineOutcome, EvalError> {
    spec.validate()?;
    let bm25_run = retrieve_all(inputs.index, inputs.queries, spec.depth);
    if let Some(dir) = out_dir {
        write_run(&bm25_run, BM25_TAG, dir.join("bm25.run"))?;
    }
    let reranked_run = rerank(&bm25_run, inputs.queries, inputs.corpus, gateway, cache)?;
    if let Some(dir) = out_dir {
        write_run(&reranked_run, &spec.scorer_tag, dir.join("reranked.run"))?;
    }
    let bm25 = evaluate_run(&bm25_run, inputs.qrels, NDCG_CUTOFF)?;
    let reranked = evaluate_run(&reranked_run, inputs.qrels, NDCG_CUTOFF)?;
    if let Some(dir) = out_dir {
        MetricsReport::new(inputs.dataset, &bm25, &reranked).save(dir.join("metrics.json"))?;
    }
    Ok(PipelineOutcome {
        bm25,
        reranked,
        reranked_run,
        bm25_run: spec.keep_bm25_scores.then_some(bm25_run),
    })
}
