use std::collections::HashSet;

use super::{GatewayError, GenerationResult, ModelGateway, RelevanceScore};
use crate::analysis::Analyzer;

/// Deterministic stand-in for both model services.
///
/// * `generate` finds the target document in the prompt (the text after the
///   last `Document:` marker, up to the final cue line) and answers with its
///   first eight analyzed terms, each with log-probability -0.1.
/// * `score` is the Jaccard similarity of the analyzed term sets.
///
/// Terms come from a lowercasing tokenizer without stopwords or stemming.
#[derive(Debug, Clone)]
pub struct StubGateway {
    analyzer: Analyzer,
    document_marker: String,
    max_terms: usize,
}

pub const STUB_TOKEN_LOGPROB: f64 = -0.1;

impl Default for StubGateway {
    fn default() -> Self {
        Self {
            analyzer: Analyzer::plain(),
            document_marker: "Document:".to_string(),
            max_terms: 8,
        }
    }
}

impl StubGateway {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_document_marker(mut self, marker: impl Into<String>) -> Self {
        self.document_marker = marker.into();
        self
    }

    fn target_document<'a>(&self, prompt: &'a str) -> &'a str {
        let body = match prompt.rfind('\n') {
            Some(i) => &prompt[..i],
            None => "",
        };
        match body.rfind(self.document_marker.as_str()) {
            Some(i) => &body[i + self.document_marker.len()..],
            None => body,
        }
    }
}

impl ModelGateway for StubGateway {
    fn generate(
        &self,
        prompt: &str,
        max_new_tokens: usize,
        _stop: &str,
    ) -> Result<GenerationResult, GatewayError> {
        if prompt.is_empty() {
            return Err(GatewayError::InvalidRequest("empty prompt".into()));
        }
        let terms = self.analyzer.analyze(self.target_document(prompt));
        let n = terms.len().min(self.max_terms).min(max_new_tokens);
        Ok(GenerationResult {
            text: terms[..n].join(" "),
            token_logprobs: Some(vec![STUB_TOKEN_LOGPROB; n]),
        })
    }

    fn score(&self, query: &str, document: &str) -> Result<RelevanceScore, GatewayError> {
        let q: HashSet<String> = self.analyzer.analyze(query).into_iter().collect();
        let d: HashSet<String> = self.analyzer.analyze(document).into_iter().collect();
        let union = q.union(&d).count();
        if union == 0 {
            return Ok(RelevanceScore(0.0));
        }
        let inter = q.intersection(&d).count();
        Ok(RelevanceScore(inter as f64 / union as f64))
    }

    fn parallelism(&self) -> usize {
        4
    }
}
