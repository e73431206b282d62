//! Training-data side of the pipeline: sample documents, generate one query
//! per document, keep the best pairs, mine a BM25 negative for each, and
//! emit the training set and batch plan.

mod batches;
mod filter;
mod generate;
mod manifest;
mod negatives;
mod sample;
mod trainset;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::gateway::GatewayError;
use crate::prompt::PromptError;
use crate::scoring::ScoringError;

pub use batches::{emit_batches, load_batches, write_batches, Batch};
pub use filter::{filter_v1, filter_v2, select_top_pairs};
pub use generate::{generate_queries, GenerationCheckpoint, GenerationConfig, GenerationOutcome, LogprobMode};
pub use manifest::{file_sha256, RunManifest, StageRecord};
pub use negatives::{mine_negative, mine_negatives, NegativeMining};
pub use sample::sample_documents;
pub use trainset::{build_trainset, Trainset};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("pair for document `{0}` has no generation log-probability")]
    MissingLogprob(String),
    #[error("positive pair for document `{0}` has no negative-mining record")]
    MissingNegativeRecord(String),
    #[error("not enough examples for one batch: {positives} positive / {negatives} negative, need {need_pos} / {need_neg}")]
    TooFewExamples {
        positives: usize,
        negatives: usize,
        need_pos: usize,
        need_neg: usize,
    },
    #[error("generation aborted after {completed} document(s); rerun to resume: {source}")]
    GenerationAborted {
        completed: usize,
        #[source]
        source: GatewayError,
    },
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SynthError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        SynthError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// A generated query for one document, with the signals the two filters
/// rank by.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPair {
    pub doc_id: String,
    pub query: String,
    /// Aggregated token log-probability of the generation (mean by default).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_logprob: Option<f64>,
    /// External relevance score, filled in by [`filter_v2`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl SyntheticPair {
    pub fn new(doc_id: impl Into<String>, query: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            query: query.into(),
            mean_logprob: None,
            score: None,
        }
    }
}

pub fn write_pairs(pairs: &[SyntheticPair], path: impl AsRef<Path>) -> Result<(), SynthError> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| SynthError::io(path, e))?);
    for p in pairs {
        let line = serde_json::to_string(p).expect("pair serializes");
        writeln!(w, "{line}").map_err(|e| SynthError::io(path, e))?;
    }
    w.flush().map_err(|e| SynthError::io(path, e))
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<SyntheticPair>, SynthError> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path).map_err(|e| SynthError::io(path, e))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| SynthError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: SyntheticPair = serde_json::from_str(&line).map_err(|e| SynthError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        if pair.query.is_empty() {
            return Err(SynthError::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                reason: "empty query".into(),
            });
        }
        out.push(pair);
    }
    Ok(out)
}

/// Knobs for the generation-side pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub sample_size: usize,
    pub keep_top: usize,
    pub negative_pool_depth: usize,
    pub few_shot_count: usize,
    pub rng_seed: u64,
    pub batch_pos: usize,
    pub batch_neg: usize,
    pub max_new_tokens: usize,
    pub max_doc_chars: usize,
    pub logprob_mode: LogprobMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sample_size: 100_000,
            keep_top: 10_000,
            negative_pool_depth: 1000,
            few_shot_count: 3,
            rng_seed: 0,
            batch_pos: 64,
            batch_neg: 64,
            max_new_tokens: 64,
            max_doc_chars: crate::prompt::DEFAULT_MAX_DOC_CHARS,
            logprob_mode: LogprobMode::Mean,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let positive = [
            ("sample_size", self.sample_size),
            ("keep_top", self.keep_top),
            ("negative_pool_depth", self.negative_pool_depth),
            ("few_shot_count", self.few_shot_count),
            ("batch_pos", self.batch_pos),
            ("batch_neg", self.batch_neg),
            ("max_new_tokens", self.max_new_tokens),
            ("max_doc_chars", self.max_doc_chars),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(SynthError::Config(format!("{name} must be positive")));
        }
        if self.keep_top > self.sample_size {
            return Err(SynthError::Config(format!(
                "keep_top ({}) exceeds sample_size ({})",
                self.keep_top, self.sample_size
            )));
        }
        Ok(())
    }

    pub fn generation(&self) -> GenerationConfig {
        GenerationConfig {
            max_new_tokens: self.max_new_tokens,
            max_doc_chars: self.max_doc_chars,
            logprob_mode: self.logprob_mode,
        }
    }
}
