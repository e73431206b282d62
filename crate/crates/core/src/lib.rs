//! Synthetic training data for neural rerankers and retrieve-then-rerank
//! evaluation.
//!
//! The crate is organised around the pipeline's data flow:
//!
//! * [`corpus`] reads and writes the on-disk formats (corpus, queries, qrels,
//!   TREC runs, training TSV).
//! * [`analysis`] and [`index`] provide the tokenizer and a BM25 inverted
//!   index with exact top-k search.
//! * [`metrics`] computes nDCG@k, [`report`] renders result tables.
//! * [`prompt`] and [`gateway`] turn documents into generation requests and
//!   talk to the model services.
//! * [`synth`] builds the training set; [`eval`] runs BM25 plus reranking.

pub mod analysis;
pub mod corpus;
pub mod eval;
pub mod gateway;
pub mod index;
pub mod metrics;
pub mod porter;
pub mod prompt;
pub mod report;
pub mod rng;
pub mod scoring;
pub mod synth;
pub mod topk;

pub use analysis::{Analyzer, Stemmer};
pub use corpus::{
    Corpus, CorpusError, Document, Label, Labeled, Qrels, Query, Run, ScoredDoc, TrainExample, TrainRow,
};
pub use eval::{evaluate_pipeline, rerank, retrieve_all, EvalError, EvalInputs, MetricsReport, PipelineOutcome, RerankSpec};
pub use gateway::{GatewayConfig, GatewayError, HttpGateway, ModelGateway, StubGateway};
pub use index::{build_index, Bm25Params, IndexError, InvertedIndex};
pub use metrics::{evaluate_run, ndcg_at_k, EvalResult, MetricsError};
pub use prompt::{FewShotExample, PromptError, PromptTemplate};
pub use report::{aggregate_report, MissingCells, Report, ReportError, ReportOptions, ResultGrid};
pub use scoring::{ScoreCache, ScoringError};
pub use synth::{PipelineConfig, SynthError, SyntheticPair};
