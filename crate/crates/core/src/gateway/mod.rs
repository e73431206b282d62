//! Clients for the two model services the pipeline depends on: a text
//! generator (few-shot query generation) and a query-document relevance
//! scorer (consistency filtering and reranking).
//!
//! [`StubGateway`] is a deterministic in-process stand-in; [`HttpGateway`]
//! talks to an external model server over a small JSON contract:
//!
//! ```text
//! POST /v1/generate  {"prompt", "max_new_tokens", "stop", "greedy": true}
//!                 -> {"text", "token_logprobs"?}
//! POST /v1/score     {"pairs": [{"query", "document"}, ...]}
//!                 -> {"scores": [f64, ...]}
//! ```

mod http;
mod retry;
mod stub;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{GatewayConfig, HttpGateway};
pub use retry::RetryPolicy;
pub use stub::StubGateway;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("service returned status {status}: {body}")]
    Service { status: u16, body: String },
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub text: String,
    /// One log-probability per generated token, when the service reports them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<f64>>,
}

impl GenerationResult {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if let Some(lp) = &self.token_logprobs {
            if let Some(bad) = lp.iter().find(|x| !x.is_finite() || **x > 0.0) {
                return Err(GatewayError::InvalidResponse(format!(
                    "token log-probability {bad} is not finite and non-positive"
                )));
            }
        }
        Ok(())
    }
}

/// Relevance of a query-document pair; higher is more relevant. Only
/// comparable between pairs scored by the same model.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelevanceScore(pub f64);

impl RelevanceScore {
    pub fn new(value: f64) -> Result<Self, GatewayError> {
        if value.is_finite() {
            Ok(Self(value))
        } else {
            Err(GatewayError::InvalidResponse(format!("non-finite score {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScorePair<'a> {
    pub query: &'a str,
    pub document: &'a str,
}

pub trait ModelGateway: Send + Sync {
    /// Greedy completion of `prompt`.
    fn generate(
        &self,
        prompt: &str,
        max_new_tokens: usize,
        stop: &str,
    ) -> Result<GenerationResult, GatewayError>;

    fn score(&self, query: &str, document: &str) -> Result<RelevanceScore, GatewayError>;

    /// Scores several pairs; the result is aligned with `pairs`.
    fn score_batch(&self, pairs: &[ScorePair<'_>]) -> Result<Vec<RelevanceScore>, GatewayError> {
        pairs.iter().map(|p| self.score(p.query, p.document)).collect()
    }

    /// How many requests callers may have in flight at once.
    fn parallelism(&self) -> usize {
        1
    }

    /// Preferred number of pairs per [`ModelGateway::score_batch`] call.
    fn batch_size(&self) -> usize {
        16
    }
}

impl<G: ModelGateway + ?Sized> ModelGateway for &G {
    fn generate(&self, prompt: &str, max_new_tokens: usize, stop: &str) -> Result<GenerationResult, GatewayError> {
        (**self).generate(prompt, max_new_tokens, stop)
    }

    fn score(&self, query: &str, document: &str) -> Result<RelevanceScore, GatewayError> {
        (**self).score(query, document)
    }

    fn score_batch(&self, pairs: &[ScorePair<'_>]) -> Result<Vec<RelevanceScore>, GatewayError> {
        (**self).score_batch(pairs)
    }

    fn parallelism(&self) -> usize {
        (**self).parallelism()
    }

    fn batch_size(&self) -> usize {
        (**self).batch_size()
    }
}

impl<G: ModelGateway + ?Sized> ModelGateway for Box<G> {
    fn generate(&self, prompt: &str, max_new_tokens: usize, stop: &str) -> Result<GenerationResult, GatewayError> {
        (**self).generate(prompt, max_new_tokens, stop)
    }

    fn score(&self, query: &str, document: &str) -> Result<RelevanceScore, GatewayError> {
        (**self).score(query, document)
    }

    fn score_batch(&self, pairs: &[ScorePair<'_>]) -> Result<Vec<RelevanceScore>, GatewayError> {
        (**self).score_batch(pairs)
    }

    fn parallelism(&self) -> usize {
        (**self).parallelism()
    }

    fn batch_size(&self) -> usize {
        (**self).batch_size()
    }
}
