use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::retry::Attempt;
use super::{GatewayError, GenerationResult, ModelGateway, RelevanceScore, RetryPolicy, ScorePair};

const BODY_EXCERPT_CHARS: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    /// Base URL, e.g. `http://127.0.0.1:8000`.
    pub url: String,
    /// Maximum concurrent requests.
    pub parallelism: usize,
    pub timeout_secs: u64,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    /// Sent as `Authorization: Bearer <token>` when set.
    pub bearer_token: Option<String>,
    pub score_batch_size: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            url: "http://127.0.0.1:8000".to_string(),
            parallelism: 4,
            timeout_secs: 120,
            max_attempts: 4,
            backoff_ms: 500,
            bearer_token: None,
            score_batch_size: 32,
        }
    }
}

impl GatewayConfig {
    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.max_attempts,
            base_delay: Duration::from_millis(self.backoff_ms),
        }
    }
}

pub struct HttpGateway {
    base: String,
    agent: ureq::Agent,
    retry: RetryPolicy,
    bearer: Option<String>,
    parallelism: usize,
    batch_size: usize,
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    prompt: &'a str,
    max_new_tokens: usize,
    stop: &'a str,
    greedy: bool,
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    pairs: &'a [ScorePair<'a>],
}

#[derive(Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
}

enum Failure {
    Transport(String),
    Status(u16, String),
    Invalid(String),
}

impl HttpGateway {
    pub fn new(config: &GatewayConfig) -> Result<Self, GatewayError> {
        if config.parallelism == 0 || config.score_batch_size == 0 {
            return Err(GatewayError::InvalidRequest(
                "parallelism and score batch size must be positive".into(),
            ));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            base: config.url.trim_end_matches('/').to_string(),
            agent,
            retry: config.retry_policy(),
            bearer: config.bearer_token.clone(),
            parallelism: config.parallelism,
            batch_size: config.score_batch_size,
        })
    }

    fn post<B: Serialize, R: for<'de> Deserialize<'de>>(&self, path: &str, body: &B) -> Result<R, GatewayError> {
        let url = format!("{}{}", self.base, path);
        let payload = serde_json::to_vec(body).map_err(|e| GatewayError::InvalidRequest(e.to_string()))?;
        let result = self.retry.run(
            || {
                let mut req = self.agent.post(&url).header("Content-Type", "application/json");
                if let Some(token) = &self.bearer {
                    req = req.header("Authorization", format!("Bearer {token}"));
                }
                let mut resp = match req.send(&payload[..]) {
                    Ok(r) => r,
                    Err(e) => return Attempt::Retry(Failure::Transport(e.to_string())),
                };
                let status = resp.status().as_u16();
                let text = match resp.body_mut().read_to_string() {
                    Ok(t) => t,
                    Err(e) => return Attempt::Retry(Failure::Transport(e.to_string())),
                };
                if (200..300).contains(&status) {
                    return match serde_json::from_str(&text) {
                        Ok(v) => Attempt::Done(v),
                        Err(e) => Attempt::Fail(Failure::Invalid(e.to_string())),
                    };
                }
                let excerpt: String = text.chars().take(BODY_EXCERPT_CHARS).collect();
                if status == 429 || status >= 500 {
                    Attempt::Retry(Failure::Status(status, excerpt))
                } else {
                    Attempt::Fail(Failure::Status(status, excerpt))
                }
            },
            std::thread::sleep,
        );
        result.map_err(|(failure, attempts)| match failure {
            Failure::Transport(message) => GatewayError::Transport { attempts, message },
            Failure::Status(status, body) => GatewayError::Service { status, body },
            Failure::Invalid(m) => GatewayError::InvalidResponse(m),
        })
    }
}

impl ModelGateway for HttpGateway {
    fn generate(
        &self,
        prompt: &str,
        max_new_tokens: usize,
        stop: &str,
    ) -> Result<GenerationResult, GatewayError> {
        if prompt.is_empty() || max_new_tokens == 0 {
            return Err(GatewayError::InvalidRequest(
                "prompt must be non-empty and max_new_tokens positive".into(),
            ));
        }
        let req = GenerateRequest {
            prompt,
            max_new_tokens,
            stop,
            greedy: true,
        };
        let result: GenerationResult = self.post("/v1/generate", &req)?;
        result.validate()?;
        Ok(result)
    }

    fn score(&self, query: &str, document: &str) -> Result<RelevanceScore, GatewayError> {
        let pair = ScorePair { query, document };
        Ok(self.score_batch(std::slice::from_ref(&pair))?[0])
    }

    fn score_batch(&self, pairs: &[ScorePair<'_>]) -> Result<Vec<RelevanceScore>, GatewayError> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        if pairs.iter().any(|p| p.query.is_empty() || p.document.is_empty()) {
            return Err(GatewayError::InvalidRequest("query and document must be non-empty".into()));
        }
        let resp: ScoreResponse = self.post("/v1/score", &ScoreRequest { pairs })?;
        if resp.scores.len() != pairs.len() {
            return Err(GatewayError::InvalidResponse(format!(
                "expected {} scores, got {}",
                pairs.len(),
                resp.scores.len()
            )));
        }
        resp.scores.into_iter().map(RelevanceScore::new).collect()
    }

    fn parallelism(&self) -> usize {
        self.parallelism
    }

    fn batch_size(&self) -> usize {
        self.batch_size
    }
}
