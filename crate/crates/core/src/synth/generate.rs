use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::gateway::{GatewayError, ModelGateway};
use crate::prompt::{parse_generation, render_prompt, FewShotExample, PromptTemplate};

use super::{SynthError, SyntheticPair};

/// How per-token log-probabilities collapse into one ranking signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogprobMode {
    #[default]
    Mean,
    Sum,
}

impl LogprobMode {
    fn aggregate(self, logprobs: &[f64]) -> Option<f64> {
        if logprobs.is_empty() {
            return None;
        }
        let sum: f64 = logprobs.iter().sum();
        Some(match self {
            LogprobMode::Mean => sum / logprobs.len() as f64,
            LogprobMode::Sum => sum,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerationConfig {
    pub max_new_tokens: usize,
    pub max_doc_chars: usize,
    pub logprob_mode: LogprobMode,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            max_new_tokens: 64,
            max_doc_chars: crate::prompt::DEFAULT_MAX_DOC_CHARS,
            logprob_mode: LogprobMode::Mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOutcome {
    /// One pair per document that produced a usable query, in input order.
    pub pairs: Vec<SyntheticPair>,
    /// Documents whose generation was empty after post-processing.
    pub degenerate: usize,
    /// Documents answered from the checkpoint instead of the gateway.
    pub resumed: usize,
}

/// One line of the checkpoint file. `query: null` records a degenerate
/// generation so it is not retried on resume.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointRecord {
    doc_id: String,
    query: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mean_logprob: Option<f64>,
}

/// Append-only log of finished documents.
pub struct GenerationCheckpoint {
    path: PathBuf,
    done: HashMap<String, CheckpointRecord>,
    writer: BufWriter<File>,
}

impl GenerationCheckpoint {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, SynthError> {
        let path = path.as_ref().to_path_buf();
        let mut done = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(|e| SynthError::io(&path, e))?);
            for line in reader.lines() {
                let line = line.map_err(|e| SynthError::io(&path, e))?;
                // A torn last line from a crash is simply regenerated.
                if let Ok(rec) = serde_json::from_str::<CheckpointRecord>(&line) {
                    done.insert(rec.doc_id.clone(), rec);
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| SynthError::io(&path, e))?;
        Ok(Self {
            path,
            done,
            writer: BufWriter::new(file),
        })
    }

    pub fn completed(&self) -> usize {
        self.done.len()
    }

    fn record(&mut self, rec: CheckpointRecord) -> Result<(), SynthError> {
        let line = serde_json::to_string(&rec).expect("record serializes");
        writeln!(self.writer, "{line}").map_err(|e| SynthError::io(&self.path, e))?;
        self.done.insert(rec.doc_id.clone(), rec);
        Ok(())
    }

    fn flush(&mut self) -> Result<(), SynthError> {
        self.writer.flush().map_err(|e| SynthError::io(&self.path, e))
    }
}

/// Renders a prompt per document, generates greedily, and keeps the parsed
/// query. Requests fan out over `gateway.parallelism()` threads; output
/// order always follows `docs`.
///
/// With a checkpoint, each finished document is logged as soon as its wave
/// of requests completes, and already-logged documents are skipped.
pub fn generate_queries(
    docs: &[Document],
    template: &PromptTemplate,
    examples: &[FewShotExample],
    gateway: &dyn ModelGateway,
    config: &GenerationConfig,
    mut checkpoint: Option<&mut GenerationCheckpoint>,
) -> Result<GenerationOutcome, SynthError> {
    let mut records: HashMap<String, CheckpointRecord> = HashMap::new();
    let mut resumed = 0;
    let mut todo: Vec<&Document> = Vec::new();
    for doc in docs {
        match checkpoint.as_ref().and_then(|c| c.done.get(&doc.id)) {
            Some(rec) => {
                records.insert(doc.id.clone(), rec.clone());
                resumed += 1;
            }
            None => todo.push(doc),
        }
    }

    let parallel = gateway.parallelism().max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .expect("thread pool");
    let wave_size = parallel * 8;
    let mut completed = 0;
    for wave_docs in todo.chunks(wave_size) {
        // Prompt errors are configuration problems and abort before any
        // request of the wave goes out.
        let wave_prompts: Vec<String> = wave_docs
            .iter()
            .map(|d| render_prompt(template, examples, d, config.max_doc_chars))
            .collect::<Result<_, _>>()?;
        let results: Vec<Result<CheckpointRecord, GatewayError>> = pool.install(|| {
            wave_docs
                .par_iter()
                .zip(wave_prompts.par_iter())
                .map(|(doc, prompt)| {
                    let gen = gateway.generate(prompt, config.max_new_tokens, &template.stop)?;
                    gen.validate()?;
                    let query = parse_generation(&gen.text, &template.stop);
                    let mean_logprob = match (&query, &gen.token_logprobs) {
                        (Some(_), Some(lp)) => config.logprob_mode.aggregate(lp),
                        _ => None,
                    };
                    Ok(CheckpointRecord {
                        doc_id: doc.id.clone(),
                        query,
                        mean_logprob,
                    })
                })
                .collect()
        });
        let mut failure = None;
        for result in results {
            match result {
                Ok(rec) => {
                    if let Some(c) = checkpoint.as_deref_mut() {
                        c.record(rec.clone())?;
                    }
                    records.insert(rec.doc_id.clone(), rec);
                    completed += 1;
                }
                Err(e) => {
                    failure.get_or_insert(e);
                }
            }
        }
        if let Some(c) = checkpoint.as_deref_mut() {
            c.flush()?;
        }
        if let Some(source) = failure {
            return Err(SynthError::GenerationAborted {
                completed: completed + resumed,
                source,
            });
        }
    }

    let mut pairs = Vec::new();
    let mut degenerate = 0;
    for doc in docs {
        let rec = &records[&doc.id];
        match &rec.query {
            Some(q) => pairs.push(SyntheticPair {
                doc_id: doc.id.clone(),
                query: q.clone(),
                mean_logprob: rec.mean_logprob,
                score: None,
            }),
            None => degenerate += 1,
        }
    }
    Ok(GenerationOutcome {
        pairs,
        degenerate,
        resumed,
    })
}
