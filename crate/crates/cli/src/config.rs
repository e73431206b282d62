//! Layered settings: built-in defaults, then the TOML file, then `INPARS_*`
//! environment variables, then command-line flags.
//!
//! Environment variables name a section and a key separated by the first
//! underscore, e.g. `INPARS_PIPELINE_KEEP_TOP=500` or `INPARS_GATEWAY_URL`.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use figment::providers::{Env, Format, Serialized, Toml};
use figment::Figment;
use inpars_core::gateway::{GatewayConfig, HttpGateway, ModelGateway, StubGateway};
use inpars_core::synth::PipelineConfig;
use inpars_core::{Analyzer, Bm25Params, RerankSpec, Stemmer};
use serde::{Deserialize, Serialize};

pub const ENV_PREFIX: &str = "INPARS_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum GatewayKind {
    #[default]
    Stub,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FilterMode {
    V1,
    #[default]
    V2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySection {
    pub kind: GatewayKind,
    pub url: String,
    pub parallelism: usize,
    pub timeout_secs: u64,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub bearer_token: Option<String>,
    pub score_batch_size: usize,
}

impl Default for GatewaySection {
    fn default() -> Self {
        let http = GatewayConfig::default();
        Self {
            kind: GatewayKind::Stub,
            url: http.url,
            parallelism: http.parallelism,
            timeout_secs: http.timeout_secs,
            max_attempts: http.max_attempts,
            backoff_ms: http.backoff_ms,
            bearer_token: http.bearer_token,
            score_batch_size: http.score_batch_size,
        }
    }
}

impl GatewaySection {
    fn http_config(&self, url: &str) -> GatewayConfig {
        GatewayConfig {
            url: url.to_string(),
            parallelism: self.parallelism,
            timeout_secs: self.timeout_secs,
            max_attempts: self.max_attempts,
            backoff_ms: self.backoff_ms,
            bearer_token: self.bearer_token.clone(),
            score_batch_size: self.score_batch_size,
        }
    }

    /// A gateway for `url`, or the configured one.
    pub fn build(&self, url: Option<&str>) -> Result<Box<dyn ModelGateway>> {
        Ok(match self.kind {
            GatewayKind::Stub => Box::new(StubGateway::new()),
            GatewayKind::Http => Box::new(HttpGateway::new(&self.http_config(url.unwrap_or(&self.url)))?),
        })
    }

    /// Identifies the model behind the gateway, for cache file names and
    /// stage fingerprints. Transport settings are left out.
    pub fn identity(&self, url: Option<&str>) -> String {
        match self.kind {
            GatewayKind::Stub => "stub".to_string(),
            GatewayKind::Http => format!("http {}", url.unwrap_or(&self.url)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzerSection {
    pub lowercase: bool,
    pub stopwords: bool,
    pub stemmer: Stemmer,
}

impl Default for AnalyzerSection {
    fn default() -> Self {
        Self {
            lowercase: true,
            stopwords: true,
            stemmer: Stemmer::Porter,
        }
    }
}

impl AnalyzerSection {
    pub fn analyzer(&self) -> Analyzer {
        let base = if self.stopwords {
            Analyzer::english()
        } else {
            Analyzer::plain()
        };
        base.with_lowercase(self.lowercase).with_stemmer(self.stemmer)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub mode: FilterMode,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self { mode: FilterMode::V2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub depth: usize,
    pub k: usize,
    pub scorer_tag: String,
    /// Reranker service, when it differs from `gateway.url`.
    pub scorer_url: Option<String>,
}

impl Default for EvalSection {
    fn default() -> Self {
        let spec = RerankSpec::default();
        Self {
            depth: spec.depth,
            k: inpars_core::eval::NDCG_CUTOFF,
            scorer_tag: spec.scorer_tag,
            scorer_url: None,
        }
    }
}

impl EvalSection {
    pub fn rerank_spec(&self) -> RerankSpec {
        RerankSpec {
            depth: self.depth,
            scorer_tag: self.scorer_tag.clone(),
            keep_bm25_scores: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptSection {
    /// Template file; the bundled gbq-style template when unset.
    pub template: Option<PathBuf>,
    /// Few-shot JSONL; the bundled examples when unset.
    pub few_shot: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub pipeline: PipelineConfig,
    pub filter: FilterSection,
    pub gateway: GatewaySection,
    pub analyzer: AnalyzerSection,
    pub bm25: Bm25Params,
    pub eval: EvalSection,
    pub prompt: PromptSection,
}

/// One flag value to lay over everything else, keyed `section.field`.
pub type Override = (&'static str, serde_json::Value);

impl CliConfig {
    pub fn resolve(file: Option<&Path>, flags: &[Override]) -> Result<Self> {
        let mut fig = Figment::from(Serialized::defaults(CliConfig::default()));
        if let Some(path) = file {
            anyhow::ensure!(path.is_file(), "config file {} not found", path.display());
            fig = fig.merge(Toml::file(path));
        }
        fig = fig.merge(Env::prefixed(ENV_PREFIX).filter_map(|key| {
            let (section, field) = key.as_str().split_once('_')?;
            Some(format!("{section}.{field}").into())
        }));
        for (key, value) in flags {
            fig = fig.merge((*key, value));
        }
        let config: CliConfig = fig.extract().context("invalid configuration")?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        Bm25Params::new(self.bm25.k1, self.bm25.b)?;
        self.eval.rerank_spec().validate()?;
        anyhow::ensure!(self.eval.k > 0, "eval.k must be positive");
        anyhow::ensure!(
            self.gateway.parallelism > 0 && self.gateway.score_batch_size > 0,
            "gateway.parallelism and gateway.score_batch_size must be positive"
        );
        Ok(())
    }
}
