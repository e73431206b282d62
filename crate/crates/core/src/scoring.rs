//! Relevance scoring through a [`ModelGateway`] with a persistent cache.
//!
//! Cache entries are keyed by (SHA-256 of the query text, doc id) and
//! appended to a JSONL file as soon as each wave of requests completes, so a
//! run that aborts on a gateway failure keeps everything scored so far.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::gateway::{GatewayError, ModelGateway, ScorePair};

#[derive(Debug, thiserror::Error)]
pub enum ScoringError {
    #[error("scoring failed after {completed} new score(s) were cached: {source}")]
    Gateway {
        completed: usize,
        #[source]
        source: GatewayError,
    },
    #[error("score cache {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("score cache {path}:{line}: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    query_sha256: String,
    doc_id: String,
    score: f64,
}

pub fn query_hash(query: &str) -> String {
    hex::encode(Sha256::digest(query.as_bytes()))
}

#[derive(Default)]
pub struct ScoreCache {
    path: Option<PathBuf>,
    entries: HashMap<(String, String), f64>,
    writer: Option<BufWriter<File>>,
}

impl ScoreCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a cache file, loading existing entries.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ScoringError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| ScoringError::Io {
            path: path.clone(),
            source,
        };
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(io)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                // A torn final line from an interrupted write is dropped.
                let rec: CacheRecord = match serde_json::from_str(&line) {
                    Ok(r) => r,
                    Err(e) => {
                        log::warn!("{}:{}: skipping unreadable cache line: {e}", path.display(), i + 1);
                        continue;
                    }
                };
                if !rec.score.is_finite() {
                    return Err(ScoringError::Corrupt {
                        path: path.clone(),
                        line: i + 1,
                        reason: "non-finite score".into(),
                    });
                }
                entries.insert((rec.query_sha256, rec.doc_id), rec.score);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io)?;
        Ok(Self {
            writer: Some(BufWriter::new(file)),
            path: Some(path),
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, query: &str, doc_id: &str) -> Option<f64> {
        self.entries
            .get(&(query_hash(query), doc_id.to_string()))
            .copied()
    }

    pub fn insert(&mut self, query: &str, doc_id: &str, score: f64) -> Result<(), ScoringError> {
        let key = (query_hash(query), doc_id.to_string());
        if let Some(w) = &mut self.writer {
            let rec = CacheRecord {
                query_sha256: key.0.clone(),
                doc_id: key.1.clone(),
                score,
            };
            let line = serde_json::to_string(&rec).expect("record serializes");
            writeln!(w, "{line}").map_err(|source| ScoringError::Io {
                path: self.path.clone().unwrap_or_default(),
                source,
            })?;
        }
        self.entries.insert(key, score);
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), ScoringError> {
        if let Some(w) = &mut self.writer {
            w.flush().map_err(|source| ScoringError::Io {
                path: self.path.clone().unwrap_or_default(),
                source,
            })?;
        }
        Ok(())
    }
}

impl Drop for ScoreCache {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}

/// One pair to score.
pub struct ScoreItem<'a> {
    pub query: &'a str,
    pub doc_id: &'a str,
    pub doc_text: &'a str,
}

/// Scores every item, consulting and filling `cache`. Requests go out in
/// batches of `gateway.batch_size()`, up to `gateway.parallelism()` at a
/// time. The result is aligned with `items`.
pub fn score_items(
    gateway: &dyn ModelGateway,
    cache: &mut ScoreCache,
    items: &[ScoreItem<'_>],
) -> Result<Vec<f64>, ScoringError> {
    let mut scores: Vec<Option<f64>> = items.iter().map(|it| cache.get(it.query, it.doc_id)).collect();
    let pending: Vec<usize> = (0..items.len()).filter(|&i| scores[i].is_none()).collect();
    if pending.is_empty() {
        return Ok(scores.into_iter().map(|s| s.expect("all cached")).collect());
    }
    let batch = gateway.batch_size().max(1);
    let parallel = gateway.parallelism().max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .expect("thread pool");
    let batches: Vec<&[usize]> = pending.chunks(batch).collect();
    let mut completed = 0;
    for wave in batches.chunks(parallel) {
        let results: Vec<Result<Vec<f64>, GatewayError>> = pool.install(|| {
            wave.par_iter()
                .map(|idx| {
                    let pairs: Vec<ScorePair<'_>> = idx
                        .iter()
                        .map(|&i| ScorePair {
                            query: items[i].query,
                            document: items[i].doc_text,
                        })
                        .collect();
                    gateway
                        .score_batch(&pairs)
                        .map(|v| v.into_iter().map(|s| s.value()).collect())
                })
                .collect()
        });
        let mut failure = None;
        for (idx, result) in wave.iter().zip(results) {
            match result {
                Ok(values) => {
                    for (&i, v) in idx.iter().zip(values) {
                        cache.insert(items[i].query, items[i].doc_id, v)?;
                        scores[i] = Some(v);
                        completed += 1;
                    }
                }
                Err(e) => {
                    failure.get_or_insert(e);
                }
            }
        }
        cache.flush()?;
        if let Some(source) = failure {
            return Err(ScoringError::Gateway { completed, source });
        }
    }
    Ok(scores.into_iter().map(|s| s.expect("all scored")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{GenerationResult, RelevanceScore, StubGateway};
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting {
        inner: StubGateway,
        calls: AtomicUsize,
        fail_after: usize,
    }

    impl ModelGateway for Counting {
        fn generate(&self, p: &str, n: usize, s: &str) -> Result<GenerationResult, GatewayError> {
            self.inner.generate(p, n, s)
        }

        fn score(&self, q: &str, d: &str) -> Result<RelevanceScore, GatewayError> {
            if self.calls.fetch_add(1, Ordering::SeqCst) >= self.fail_after {
                return Err(GatewayError::Transport {
                    attempts: 1,
                    message: "down".into(),
                });
            }
            self.inner.score(q, d)
        }

        fn parallelism(&self) -> usize {
            1
        }

        fn batch_size(&self) -> usize {
            1
        }
    }

    #[test]
    fn cache_persists_and_resumes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.jsonl");
        let docs: Vec<String> = (0..6).map(|i| format!("d{i}")).collect();
        let items: Vec<ScoreItem<'_>> = docs
            .iter()
            .map(|d| ScoreItem {
                query: "a b",
                doc_id: d,
                doc_text: "a c",
            })
            .collect();

        let flaky = Counting {
            inner: StubGateway::new(),
            calls: AtomicUsize::new(0),
            fail_after: 4,
        };
        {
            let mut cache = ScoreCache::open(&path).unwrap();
            let err = score_items(&flaky, &mut cache, &items).unwrap_err();
            assert!(matches!(err, ScoringError::Gateway { completed: 4, .. }));
        }
        let healthy = Counting {
            inner: StubGateway::new(),
            calls: AtomicUsize::new(0),
            fail_after: usize::MAX,
        };
        let mut cache = ScoreCache::open(&path).unwrap();
        assert_eq!(cache.len(), 4);
        let scores = score_items(&healthy, &mut cache, &items).unwrap();
        assert_eq!(healthy.calls.load(Ordering::SeqCst), 2);
        assert!(scores.iter().all(|&s| (s - 1.0 / 3.0).abs() < 1e-15));
    }
}
