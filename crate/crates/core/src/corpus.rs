//! BEIR-style corpus, query and qrels readers plus TREC run and training-set
//! writers.
//!
//! Formats:
//!
//! * corpus JSONL: one `{"_id", "title"?, "text"}` object per line
//! * queries JSONL: one `{"_id", "text"}` object per line
//! * qrels TSV: `query-id \t corpus-id \t score`, optional header row
//! * run: TREC six-column `qid Q0 docid rank score tag`
//! * trainset TSV: `query \t doc-text \t true|false`
//!
//! All input must be valid UTF-8; invalid bytes are reported as errors with
//! the offending line number rather than decoded lossily.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: invalid UTF-8")]
    Utf8 { path: PathBuf, line: usize },
    #[error("{path}:{line}: malformed record: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}:{line}: duplicate id `{id}`")]
    DuplicateId {
        path: PathBuf,
        line: usize,
        id: String,
    },
    #[error("{path}:{line}: duplicate judgment for query `{query}` and document `{doc}`")]
    DuplicateJudgment {
        path: PathBuf,
        line: usize,
        query: String,
        doc: String,
    },
    #[error("invalid run: {0}")]
    InvalidRun(String),
    #[error("field `{field}` contains whitespace and cannot be written to a TREC run: {value:?}")]
    WhitespaceInField { field: &'static str, value: String },
    #[error("unknown document id `{0}`")]
    UnknownDocument(String),
}

impl CorpusError {
    fn io(path: &Path, source: io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn malformed(path: &Path, line: usize, reason: impl Into<String>) -> Self {
        CorpusError::Malformed {
            path: path.to_path_buf(),
            line,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// One corpus entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    #[serde(rename = "_id")]
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            text: text.into(),
        }
    }

    /// Single-field rendering used for indexing, scoring and training data:
    /// `title + " " + text`, or just `text` when the title is empty.
    pub fn flat_text(&self) -> String {
        if self.title.is_empty() {
            self.text.clone()
        } else {
            let mut out = String::with_capacity(self.title.len() + 1 + self.text.len());
            out.push_str(&self.title);
            out.push(' ');
            out.push_str(&self.text);
            out
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    #[serde(rename = "_id")]
    pub id: String,
    pub text: String,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }
}

/// Reads a file line by line, yielding `(1-based line number, line)` and
/// rejecting invalid UTF-8. Trailing `\n` / `\r\n` is stripped.
struct Lines {
    path: PathBuf,
    reader: BufReader<File>,
    line_no: usize,
    buf: Vec<u8>,
}

impl Lines {
    fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            reader: BufReader::new(file),
            line_no: 0,
            buf: Vec::new(),
        })
    }
}

impl Iterator for Lines {
    type Item = Result<(usize, String)>;

    fn next(&mut self) -> Option<Self::Item> {
        self.buf.clear();
        match self.reader.read_until(b'\n', &mut self.buf) {
            Ok(0) => None,
            Ok(_) => {
                self.line_no += 1;
                if self.buf.last() == Some(&b'\n') {
                    self.buf.pop();
                    if self.buf.last() == Some(&b'\r') {
                        self.buf.pop();
                    }
                }
                let bytes = std::mem::take(&mut self.buf);
                Some(match String::from_utf8(bytes) {
                    Ok(s) => Ok((self.line_no, s)),
                    Err(_) => Err(CorpusError::Utf8 {
                        path: self.path.clone(),
                        line: self.line_no,
                    }),
                })
            }
            Err(e) => Some(Err(CorpusError::io(&self.path, e))),
        }
    }
}

/// Streaming corpus reader. Yields documents in file order; blank lines are
/// skipped. Stops being useful after the first error.
pub struct CorpusReader {
    lines: Lines,
    seen: HashSet<String>,
}

impl Iterator for CorpusReader {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let (line_no, line) = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e)),
            };
            if line.trim().is_empty() {
                continue;
            }
            let path = &self.lines.path;
            let doc: Document = match serde_json::from_str(&line) {
                Ok(d) => d,
                Err(e) => return Some(Err(CorpusError::malformed(path, line_no, e.to_string()))),
            };
            if doc.id.is_empty() {
                return Some(Err(CorpusError::malformed(path, line_no, "empty `_id`")));
            }
            if !self.seen.insert(doc.id.clone()) {
                return Some(Err(CorpusError::DuplicateId {
                    path: path.clone(),
                    line: line_no,
                    id: doc.id,
                }));
            }
            return Some(Ok(doc));
        }
    }
}

/// Opens a BEIR `corpus.jsonl` for streaming.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<CorpusReader> {
    Ok(CorpusReader {
        lines: Lines::open(path.as_ref())?,
        seen: HashSet::new(),
    })
}

pub fn write_corpus<'a>(
    docs: impl IntoIterator<Item = &'a Document>,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_jsonl(docs, path.as_ref())
}

pub fn load_queries(path: impl AsRef<Path>) -> Result<Vec<Query>> {
    let path = path.as_ref();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for item in Lines::open(path)? {
        let (line_no, line) = item?;
        if line.trim().is_empty() {
            continue;
        }
        let query: Query = serde_json::from_str(&line)
            .map_err(|e| CorpusError::malformed(path, line_no, e.to_string()))?;
        if query.id.is_empty() {
            return Err(CorpusError::malformed(path, line_no, "empty `_id`"));
        }
        if !seen.insert(query.id.clone()) {
            return Err(CorpusError::DuplicateId {
                path: path.to_path_buf(),
                line: line_no,
                id: query.id,
            });
        }
        out.push(query);
    }
    Ok(out)
}

pub fn write_queries<'a>(
    queries: impl IntoIterator<Item = &'a Query>,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_jsonl(queries, path.as_ref())
}

fn write_jsonl<'a, T: Serialize + 'a>(
    items: impl IntoIterator<Item = &'a T>,
    path: &Path,
) -> Result<()> {
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| CorpusError::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| CorpusError::io(path, e))?;
    }
    w.flush().map_err(|e| CorpusError::io(path, e))
}

/// In-memory corpus with id lookup.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    /// Collects documents, rejecting duplicate ids.
    pub fn from_documents(docs: impl IntoIterator<Item = Document>) -> Result<Self> {
        let mut corpus = Corpus::default();
        for doc in docs {
            if corpus.by_id.contains_key(&doc.id) {
                return Err(CorpusError::DuplicateId {
                    path: PathBuf::new(),
                    line: corpus.docs.len() + 1,
                    id: doc.id,
                });
            }
            corpus.by_id.insert(doc.id.clone(), corpus.docs.len());
            corpus.docs.push(doc);
        }
        Ok(corpus)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let docs = load_corpus(path)?.collect::<Result<Vec<_>>>()?;
        Self::from_documents(docs)
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.by_id.get(id).map(|&i| &self.docs[i])
    }

    /// Flat text of `id`, or [`CorpusError::UnknownDocument`].
    pub fn flat_text(&self, id: &str) -> Result<String> {
        self.get(id)
            .map(Document::flat_text)
            .ok_or_else(|| CorpusError::UnknownDocument(id.to_string()))
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

/// Relevance judgments: query id → doc id → grade.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a judgment; returns `false` (and leaves the old grade) if the
    /// pair was already judged.
    pub fn insert(&mut self, query: impl Into<String>, doc: impl Into<String>, grade: u32) -> bool {
        let per_query = self.judgments.entry(query.into()).or_default();
        match per_query.entry(doc.into()) {
            std::collections::btree_map::Entry::Occupied(_) => false,
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(grade);
                true
            }
        }
    }

    pub fn get(&self, query: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(query)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BTreeMap<String, u32>)> {
        self.judgments.iter()
    }

    pub fn query_count(&self) -> usize {
        self.judgments.len()
    }

    pub fn judgment_count(&self) -> usize {
        self.judgments.values().map(BTreeMap::len).sum()
    }
}

/// Loads a BEIR qrels TSV. A first row whose third column is not an integer
/// is treated as a header.
pub fn load_qrels(path: impl AsRef<Path>) -> Result<Qrels> {
    let path = path.as_ref();
    let mut qrels = Qrels::new();
    let mut first = true;
    for item in Lines::open(path)? {
        let (line_no, line) = item?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(CorpusError::malformed(
                path,
                line_no,
                format!("expected 3 tab-separated columns, found {}", cols.len()),
            ));
        }
        let is_first = std::mem::replace(&mut first, false);
        let grade = match cols[2].parse::<u32>() {
            Ok(g) => g,
            Err(_) if is_first && cols[2].parse::<f64>().is_err() => continue,
            Err(_) => {
                return Err(CorpusError::malformed(
                    path,
                    line_no,
                    format!("grade `{}` is not a non-negative integer", cols[2]),
                ))
            }
        };
        if cols[0].is_empty() || cols[1].is_empty() {
            return Err(CorpusError::malformed(path, line_no, "empty query or document id"));
        }
        if !qrels.insert(cols[0], cols[1], grade) {
            return Err(CorpusError::DuplicateJudgment {
                path: path.to_path_buf(),
                line: line_no,
                query: cols[0].to_string(),
                doc: cols[1].to_string(),
            });
        }
    }
    Ok(qrels)
}

pub fn write_qrels(qrels: &Qrels, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| CorpusError::io(path, e);
    writeln!(w, "query-id\tcorpus-id\tscore").map_err(io)?;
    for (q, docs) in qrels.iter() {
        for (d, grade) in docs {
            writeln!(w, "{q}\t{d}\t{grade}").map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// One ranked entry of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
}

impl ScoredDoc {
    pub fn new(doc_id: impl Into<String>, score: f64) -> Self {
        Self {
            doc_id: doc_id.into(),
            score,
        }
    }
}

/// Orders by score descending, then doc id ascending.
pub fn rank_order(a: &ScoredDoc, b: &ScoredDoc) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
}

/// Per-query ranked lists. Every list is kept sorted by score descending
/// with ties broken by doc id ascending; doc ids are unique per query and
/// scores finite.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Run {
    rankings: BTreeMap<String, Vec<ScoredDoc>>,
}

impl Run {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets the ranking for `query`, sorting it into canonical order.
    pub fn insert(&mut self, query: impl Into<String>, mut docs: Vec<ScoredDoc>) -> Result<()> {
        let query = query.into();
        let mut seen = HashSet::with_capacity(docs.len());
        for d in &docs {
            if !d.score.is_finite() {
                return Err(CorpusError::InvalidRun(format!(
                    "non-finite score for `{}` in query `{query}`",
                    d.doc_id
                )));
            }
            if !seen.insert(d.doc_id.as_str()) {
                return Err(CorpusError::InvalidRun(format!(
                    "duplicate document `{}` in query `{query}`",
                    d.doc_id
                )));
            }
        }
        docs.sort_by(rank_order);
        self.rankings.insert(query, docs);
        Ok(())
    }

    pub fn get(&self, query: &str) -> Option<&[ScoredDoc]> {
        self.rankings.get(query).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Vec<ScoredDoc>)> {
        self.rankings.iter()
    }

    pub fn query_count(&self) -> usize {
        self.rankings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rankings.is_empty()
    }
}

fn check_token(field: &'static str, value: &str) -> Result<()> {
    if value.is_empty() || value.chars().any(char::is_whitespace) {
        return Err(CorpusError::WhitespaceInField {
            field,
            value: value.to_string(),
        });
    }
    Ok(())
}

/// Writes `run` in TREC format. Scores use the shortest representation that
/// parses back to the same `f64`.
pub fn write_run(run: &Run, tag: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    check_token("tag", tag)?;
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_run_to(run, tag, &mut w).map_err(|e| match e {
        RunWriteError::Io(e) => CorpusError::io(path, e),
        RunWriteError::Corpus(e) => e,
    })?;
    w.flush().map_err(|e| CorpusError::io(path, e))
}

enum RunWriteError {
    Io(io::Error),
    Corpus(CorpusError),
}

fn write_run_to(run: &Run, tag: &str, w: &mut impl Write) -> std::result::Result<(), RunWriteError> {
    for (qid, docs) in run.iter() {
        check_token("query id", qid).map_err(RunWriteError::Corpus)?;
        for (rank, d) in docs.iter().enumerate() {
            check_token("doc id", &d.doc_id).map_err(RunWriteError::Corpus)?;
            writeln!(w, "{qid} Q0 {} {} {:?} {tag}", d.doc_id, rank + 1, d.score)
                .map_err(RunWriteError::Io)?;
        }
    }
    Ok(())
}

/// Loads a TREC run. Rankings are re-sorted into canonical order, so the
/// rank column only needs to be a positive integer.
pub fn load_run(path: impl AsRef<Path>) -> Result<Run> {
    let path = path.as_ref();
    let mut grouped: BTreeMap<String, Vec<ScoredDoc>> = BTreeMap::new();
    for item in Lines::open(path)? {
        let (line_no, line) = item?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 6 {
            return Err(CorpusError::malformed(
                path,
                line_no,
                format!("expected 6 columns, found {}", cols.len()),
            ));
        }
        if cols[3].parse::<u64>().is_err() {
            return Err(CorpusError::malformed(path, line_no, format!("bad rank `{}`", cols[3])));
        }
        let score: f64 = cols[4]
            .parse()
            .map_err(|_| CorpusError::malformed(path, line_no, format!("bad score `{}`", cols[4])))?;
        grouped
            .entry(cols[0].to_string())
            .or_default()
            .push(ScoredDoc::new(cols[2], score));
    }
    let mut run = Run::new();
    for (q, docs) in grouped {
        run.insert(q, docs)
            .map_err(|e| CorpusError::malformed(path, 0, e.to_string()))?;
    }
    Ok(run)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Positive => "true",
            Label::Negative => "false",
        }
    }
}

/// One training row handed to the external reranker trainer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainExample {
    pub query: String,
    pub doc_id: String,
    /// Flat rendering of `doc_id`.
    pub doc_text: String,
    pub label: Label,
}

/// Anything carrying a training label.
pub trait Labeled {
    fn label(&self) -> Label;
}

impl Labeled for Label {
    fn label(&self) -> Label {
        *self
    }
}

impl Labeled for TrainExample {
    fn label(&self) -> Label {
        self.label
    }
}

impl Labeled for TrainRow {
    fn label(&self) -> Label {
        self.label
    }
}

/// What a trainset TSV line carries; the doc id is not part of the format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainRow {
    pub query: String,
    pub doc_text: String,
    pub label: Label,
}

impl From<&TrainExample> for TrainRow {
    fn from(e: &TrainExample) -> Self {
        TrainRow {
            query: e.query.clone(),
            doc_text: e.doc_text.clone(),
            label: e.label,
        }
    }
}

/// Replaces every tab, carriage return and newline with one space.
pub fn tsv_sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if matches!(c, '\t' | '\n' | '\r') { ' ' } else { c })
        .collect()
}

pub fn write_trainset(examples: &[TrainExample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| CorpusError::io(path, e);
    for e in examples {
        writeln!(
            w,
            "{}\t{}\t{}",
            tsv_sanitize(&e.query),
            tsv_sanitize(&e.doc_text),
            e.label.as_str()
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_trainset(path: impl AsRef<Path>) -> Result<Vec<TrainRow>> {
    let path = path.as_ref();
    let mut rows = Vec::new();
    for item in Lines::open(path)? {
        let (line_no, line) = item?;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(CorpusError::malformed(
                path,
                line_no,
                format!("expected 3 tab-separated columns, found {}", cols.len()),
            ));
        }
        let label = match cols[2] {
            "true" => Label::Positive,
            "false" => Label::Negative,
            other => {
                return Err(CorpusError::malformed(
                    path,
                    line_no,
                    format!("label must be `true` or `false`, got `{other}`"),
                ))
            }
        };
        rows.push(TrainRow {
            query: cols[0].to_string(),
            doc_text: cols[1].to_string(),
            label,
        });
    }
    Ok(rows)
}
