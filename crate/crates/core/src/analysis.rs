//! Text analysis: tokenization, lowercasing, stopword removal and stemming.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::porter;

/// Classic English stopword list (the 33-word set used by Lucene's
/// `EnglishAnalyzer`).
pub const ENGLISH_STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "if", "in", "into", "is", "it",
    "no", "not", "of", "on", "or", "such", "that", "the", "their", "then", "there", "these",
    "they", "this", "to", "was", "will", "with",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stemmer {
    None,
    #[default]
    Porter,
}

/// Deterministic text-to-terms pipeline.
///
/// Tokens are maximal runs of alphanumeric characters. They are then
/// lowercased (if enabled), filtered against the stopword set, and stemmed.
/// The stopword check happens after lowercasing and before stemming.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Analyzer {
    pub lowercase: bool,
    pub stopwords: BTreeSet<String>,
    pub stemmer: Stemmer,
}

impl Default for Analyzer {
    /// Lowercase, English stopwords, Porter stemming.
    fn default() -> Self {
        Self::english()
    }
}

impl Analyzer {
    pub fn english() -> Self {
        Self {
            lowercase: true,
            stopwords: ENGLISH_STOPWORDS.iter().map(|s| s.to_string()).collect(),
            stemmer: Stemmer::Porter,
        }
    }

    /// Lowercasing tokenizer with no stopwords and no stemming.
    pub fn plain() -> Self {
        Self {
            lowercase: true,
            stopwords: BTreeSet::new(),
            stemmer: Stemmer::None,
        }
    }

    pub fn with_lowercase(mut self, on: bool) -> Self {
        self.lowercase = on;
        self
    }

    pub fn with_stopwords<I, S>(mut self, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.stopwords = words.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_stemmer(mut self, stemmer: Stemmer) -> Self {
        self.stemmer = stemmer;
        self
    }

    pub fn analyze(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        self.analyze_into(text, |t| out.push(t));
        out
    }

    pub fn analyze_into(&self, text: &str, mut sink: impl FnMut(String)) {
        for raw in text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            let token = if self.lowercase {
                raw.to_lowercase()
            } else {
                raw.to_string()
            };
            if self.stopwords.contains(&token) {
                continue;
            }
            let token = match self.stemmer {
                Stemmer::None => token,
                Stemmer::Porter => porter::stem(&token),
            };
            sink(token);
        }
    }
}
