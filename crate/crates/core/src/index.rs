//! Single-field inverted index with BM25 top-k retrieval.
//!
//! Each document is indexed as its flat text (`title + " " + text`). Scores
//! use the Robertson term weight with a Lucene-style idf:
//!
//! ```text
//! idf(t)    = ln(1 + (N - df + 0.5) / (df + 0.5))
//! w(t, d)   = idf(t) * (tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl)))
//! score(d)  = sum of w(t, d) over query-term occurrences present in d
//! ```
//!
//! The same arithmetic is used by [`InvertedIndex::bm25_score`] and by the
//! accumulator in [`InvertedIndex::search_terms`], so both return bit-identical
//! values for the same document.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::Analyzer;
use crate::corpus::{Document, ScoredDoc};
use crate::topk::{RankKey, TopK};

/// Version written into serialized indexes; loading any other version fails.
pub const INDEX_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("duplicate document id `{0}`")]
    DuplicateDocument(String),
    #[error("document ordinal {ordinal} out of range for index of {count} documents")]
    OrdinalOutOfRange { ordinal: usize, count: usize },
    #[error("invalid BM25 parameters k1={k1}, b={b}: both must be finite and non-negative")]
    InvalidParams { k1: f64, b: f64 },
    #[error("index format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt index: {0}")]
    Corrupt(String),
    #[error("too many documents for a 32-bit ordinal space")]
    TooManyDocuments,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 0.9, b: 0.4 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self, IndexError> {
        let p = Self { k1, b };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<(), IndexError> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if ok(self.k1) && ok(self.b) {
            Ok(())
        } else {
            Err(IndexError::InvalidParams {
                k1: self.k1,
                b: self.b,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone)]
pub struct InvertedIndex {
    analyzer: Analyzer,
    params: Bm25Params,
    term_ids: HashMap<String, u32>,
    postings: Vec<Vec<Posting>>,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    /// `k1 * (1 - b + b * dl / avgdl)` per document.
    length_norms: Vec<f64>,
}

pub struct IndexBuilder {
    analyzer: Analyzer,
    params: Bm25Params,
    term_ids: HashMap<String, u32>,
    postings: Vec<Vec<Posting>>,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    seen: HashSet<String>,
}

impl IndexBuilder {
    pub fn new(analyzer: Analyzer, params: Bm25Params) -> Result<Self, IndexError> {
        params.validate()?;
        Ok(Self {
            analyzer,
            params,
            term_ids: HashMap::new(),
            postings: Vec::new(),
            doc_ids: Vec::new(),
            doc_lengths: Vec::new(),
            seen: HashSet::new(),
        })
    }

    pub fn add(&mut self, doc: &Document) -> Result<(), IndexError> {
        if !self.seen.insert(doc.id.clone()) {
            return Err(IndexError::DuplicateDocument(doc.id.clone()));
        }
        let ordinal = u32::try_from(self.doc_ids.len()).map_err(|_| IndexError::TooManyDocuments)?;
        let mut counts: HashMap<String, u32> = HashMap::new();
        let mut length = 0u32;
        self.analyzer.analyze_into(&doc.flat_text(), |t| {
            length += 1;
            *counts.entry(t).or_default() += 1;
        });
        for (term, tf) in counts {
            let next = self.postings.len() as u32;
            let id = *self.term_ids.entry(term).or_insert(next);
            if id == next {
                self.postings.push(Vec::new());
            }
            self.postings[id as usize].push(Posting { doc: ordinal, tf });
        }
        self.doc_ids.push(doc.id.clone());
        self.doc_lengths.push(length);
        Ok(())
    }

    pub fn finish(self) -> InvertedIndex {
        InvertedIndex::assemble(
            self.analyzer,
            self.params,
            self.term_ids,
            self.postings,
            self.doc_ids,
            self.doc_lengths,
        )
    }
}

/// Builds an index over `docs`, rejecting duplicate ids.
pub fn build_index<'a>(
    docs: impl IntoIterator<Item = &'a Document>,
    analyzer: Analyzer,
    params: Bm25Params,
) -> Result<InvertedIndex, IndexError> {
    let mut builder = IndexBuilder::new(analyzer, params)?;
    for doc in docs {
        builder.add(doc)?;
    }
    Ok(builder.finish())
}

impl InvertedIndex {
    fn assemble(
        analyzer: Analyzer,
        params: Bm25Params,
        term_ids: HashMap<String, u32>,
        postings: Vec<Vec<Posting>>,
        doc_ids: Vec<String>,
        doc_lengths: Vec<u32>,
    ) -> Self {
        let n = doc_lengths.len();
        let total: u64 = doc_lengths.iter().map(|&l| u64::from(l)).sum();
        let avg_doc_length = if n == 0 { 0.0 } else { total as f64 / n as f64 };
        let Bm25Params { k1, b } = params;
        let length_norms = doc_lengths
            .iter()
            .map(|&dl| k1 * (1.0 - b + b * f64::from(dl) / avg_doc_length))
            .collect();
        Self {
            analyzer,
            params,
            term_ids,
            postings,
            doc_ids,
            doc_lengths,
            avg_doc_length,
            length_norms,
        }
    }

    pub fn analyzer(&self) -> &Analyzer {
        &self.analyzer
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_id(&self, ordinal: usize) -> Option<&str> {
        self.doc_ids.get(ordinal).map(String::as_str)
    }

    pub fn doc_length(&self, ordinal: usize) -> Option<u32> {
        self.doc_lengths.get(ordinal).copied()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_lengths
    }

    /// Postings for `term`, sorted by ordinal.
    pub fn postings(&self, term: &str) -> &[Posting] {
        self.term_ids
            .get(term)
            .map(|&id| self.postings[id as usize].as_slice())
            .unwrap_or(&[])
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn tf(&self, term: &str, ordinal: usize) -> u32 {
        let p = self.postings(term);
        match p.binary_search_by_key(&(ordinal as u32), |p| p.doc) {
            Ok(i) => p[i].tf,
            Err(_) => 0,
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.term_ids.keys().map(String::as_str)
    }

    pub fn idf(&self, df: usize) -> f64 {
        let n = self.doc_count() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    #[inline]
    fn term_weight(&self, idf: f64, tf: u32, ordinal: usize) -> f64 {
        let tf = f64::from(tf);
        idf * (tf * (self.params.k1 + 1.0) / (tf + self.length_norms[ordinal]))
    }

    /// BM25 score of one document for already-analyzed query terms. Each
    /// occurrence of a term in the query contributes separately; terms
    /// missing from the corpus contribute nothing.
    pub fn bm25_score(&self, query_terms: &[String], ordinal: usize) -> Result<f64, IndexError> {
        if ordinal >= self.doc_count() {
            return Err(IndexError::OrdinalOutOfRange {
                ordinal,
                count: self.doc_count(),
            });
        }
        let mut score = 0.0;
        for term in query_terms {
            let postings = self.postings(term);
            if let Ok(i) = postings.binary_search_by_key(&(ordinal as u32), |p| p.doc) {
                let idf = self.idf(postings.len());
                score += self.term_weight(idf, postings[i].tf, ordinal);
            }
        }
        Ok(score)
    }

    /// Analyzes `query` with the index analyzer and returns the top `k`
    /// documents with positive score, best first (ties by doc id).
    pub fn search_topk(&self, query: &str, k: usize) -> Vec<ScoredDoc> {
        self.search_terms(&self.analyzer.analyze(query), k)
    }

    pub fn search_terms(&self, query_terms: &[String], k: usize) -> Vec<ScoredDoc> {
        if k == 0 || self.doc_count() == 0 {
            return Vec::new();
        }
        let mut scores = vec![0.0f64; self.doc_count()];
        let mut touched: Vec<u32> = Vec::new();
        for term in query_terms {
            let postings = self.postings(term);
            if postings.is_empty() {
                continue;
            }
            let idf = self.idf(postings.len());
            for p in postings {
                let slot = &mut scores[p.doc as usize];
                if *slot == 0.0 {
                    touched.push(p.doc);
                }
                *slot += self.term_weight(idf, p.tf, p.doc as usize);
            }
        }
        let mut top = TopK::new(k);
        for &doc in &touched {
            let score = scores[doc as usize];
            if score > 0.0 {
                top.push(RankKey {
                    score,
                    tie: self.doc_ids[doc as usize].as_str(),
                });
            }
        }
        top.into_sorted_vec()
            .into_iter()
            .map(|key| ScoredDoc::new(key.tie, key.score))
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        let mut terms: Vec<(&String, &u32)> = self.term_ids.iter().collect();
        terms.sort();
        let stored = StoredIndex {
            format_version: INDEX_FORMAT_VERSION,
            params: self.params,
            analyzer: self.analyzer.clone(),
            doc_ids: self.doc_ids.clone(),
            doc_lengths: self.doc_lengths.clone(),
            postings: terms
                .into_iter()
                .map(|(t, &id)| {
                    let list = self.postings[id as usize].iter().map(|p| (p.doc, p.tf)).collect();
                    (t.clone(), list)
                })
                .collect(),
        };
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, &stored)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        let reader = BufReader::new(File::open(path)?);
        let value: serde_json::Value = serde_json::from_reader(reader)?;
        let found = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| IndexError::Corrupt("missing format_version".into()))?;
        if found != u64::from(INDEX_FORMAT_VERSION) {
            return Err(IndexError::VersionMismatch {
                found: found as u32,
                expected: INDEX_FORMAT_VERSION,
            });
        }
        let stored: StoredIndex = serde_json::from_value(value)?;
        stored.params.validate()?;
        let n = stored.doc_ids.len();
        if stored.doc_lengths.len() != n {
            return Err(IndexError::Corrupt("doc_ids and doc_lengths differ in length".into()));
        }
        let mut term_ids = HashMap::with_capacity(stored.postings.len());
        let mut postings = Vec::with_capacity(stored.postings.len());
        for (term, list) in stored.postings {
            let list: Vec<Posting> = list.into_iter().map(|(doc, tf)| Posting { doc, tf }).collect();
            if list.windows(2).any(|w| w[0].doc >= w[1].doc) || list.iter().any(|p| p.doc as usize >= n) {
                return Err(IndexError::Corrupt(format!("bad postings for `{term}`")));
            }
            term_ids.insert(term, postings.len() as u32);
            postings.push(list);
        }
        Ok(Self::assemble(
            stored.analyzer,
            stored.params,
            term_ids,
            postings,
            stored.doc_ids,
            stored.doc_lengths,
        ))
    }
}

#[derive(Serialize, Deserialize)]
struct StoredIndex {
    format_version: u32,
    params: Bm25Params,
    analyzer: Analyzer,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    postings: BTreeMap<String, Vec<(u32, u32)>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(pairs: &[(&str, &str)]) -> Vec<Document> {
        pairs.iter().map(|(id, t)| Document::new(*id, "", *t)).collect()
    }

    fn plain_index(pairs: &[(&str, &str)]) -> InvertedIndex {
        build_index(&docs(pairs), Analyzer::plain(), Bm25Params::default()).unwrap()
    }

    #[test]
    fn hand_counted_postings() {
        let idx = plain_index(&[("d1", "a b"), ("d2", "b b")]);
        assert_eq!(idx.postings("a"), [Posting { doc: 0, tf: 1 }]);
        assert_eq!(idx.postings("b"), [Posting { doc: 0, tf: 1 }, Posting { doc: 1, tf: 2 }]);
        assert_eq!(idx.doc_lengths(), [2, 2]);
        assert_eq!(idx.avg_doc_length(), 2.0);
    }

    #[test]
    fn empty_corpus() {
        let idx = plain_index(&[]);
        assert_eq!(idx.doc_count(), 0);
        assert!(idx.search_topk("anything", 10).is_empty());
    }

    #[test]
    fn single_doc_score() {
        let idx = plain_index(&[("d", "a")]);
        let expected = (4.0f64 / 3.0).ln() * (1.0 * 1.9) / (1.0 + 0.9);
        let got = idx.bm25_score(&["a".to_string()], 0).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.287_682_072_451_780_9).abs() < 1e-12);
    }

    #[test]
    fn absent_terms_score_zero() {
        let idx = plain_index(&[("d", "a b")]);
        assert_eq!(idx.bm25_score(&["zzz".to_string()], 0).unwrap(), 0.0);
        assert!(idx.search_topk("zzz", 5).is_empty());
    }

    #[test]
    fn repeated_query_terms_count_twice() {
        let idx = plain_index(&[("d", "a b"), ("e", "c")]);
        let once = idx.bm25_score(&["a".into()], 0).unwrap();
        let twice = idx.bm25_score(&["a".into(), "a".into()], 0).unwrap();
        assert_eq!(twice, once + once);
    }

    #[test]
    fn ordinal_out_of_range() {
        let idx = plain_index(&[("d", "a")]);
        assert!(matches!(
            idx.bm25_score(&[], 1),
            Err(IndexError::OrdinalOutOfRange { ordinal: 1, count: 1 })
        ));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let r = build_index(&docs(&[("d", "a"), ("d", "b")]), Analyzer::plain(), Bm25Params::default());
        assert!(matches!(r, Err(IndexError::DuplicateDocument(_))));
    }

    #[test]
    fn zero_token_docs_never_match() {
        let idx = plain_index(&[("empty", "!!!"), ("d", "a")]);
        assert_eq!(idx.doc_length(0), Some(0));
        let hits = idx.search_topk("a", 10);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].doc_id, "d");
    }

    #[test]
    fn ties_break_by_doc_id() {
        let idx = plain_index(&[("c", "x"), ("a", "x"), ("b", "x")]);
        let ids: Vec<_> = idx.search_topk("x", 2).into_iter().map(|h| h.doc_id).collect();
        assert_eq!(ids, ["a", "b"]);
    }

    #[test]
    fn title_is_indexed() {
        let d = vec![Document::new("d", "Rust", "fast")];
        let idx = build_index(&d, Analyzer::plain(), Bm25Params::default()).unwrap();
        assert_eq!(idx.search_topk("rust", 1).len(), 1);
    }

    #[test]
    fn invalid_params() {
        assert!(Bm25Params::new(-1.0, 0.4).is_err());
        assert!(Bm25Params::new(0.9, f64::NAN).is_err());
    }

    #[test]
    fn save_load_and_version_check() {
        let dir = tempfile::tempdir().unwrap();
        let idx = plain_index(&[("d1", "a b c"), ("d2", "b c c"), ("d3", "q")]);
        let p = dir.path().join("idx.json");
        idx.save(&p).unwrap();
        let back = InvertedIndex::load(&p).unwrap();
        assert_eq!(back.search_topk("c b", 10), idx.search_topk("c b", 10));
        assert_eq!(back.doc_ids(), idx.doc_ids());

        let text = std::fs::read_to_string(&p).unwrap();
        std::fs::write(&p, text.replace("\"format_version\":1", "\"format_version\":2")).unwrap();
        assert!(matches!(
            InvertedIndex::load(&p),
            Err(IndexError::VersionMismatch { found: 2, .. })
        ));
    }
}
