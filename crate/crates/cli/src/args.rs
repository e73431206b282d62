use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::config::{FilterMode, GatewayKind, Override};

#[derive(Debug, Parser)]
#[command(name = "inpars", version, about = "Synthetic training data and retrieve-then-rerank evaluation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML settings file.
    #[arg(long, global = true, env = "INPARS_CONFIG", value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Model backend.
    #[arg(long, global = true, value_enum)]
    pub gateway: Option<GatewayKind>,
    /// Base URL of the model service.
    #[arg(long, global = true, value_name = "URL")]
    pub gateway_url: Option<String>,
    /// Maximum concurrent model requests.
    #[arg(long, global = true, value_name = "N")]
    pub parallelism: Option<usize>,
    /// Seed for every random choice in the pipeline.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Args)]
pub struct OutDir {
    /// Directory receiving every output of the command.
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the BM25 index of a corpus (index.json).
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Draw the documents to generate queries for (sampled.jsonl).
    Sample {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_name = "N")]
        sample_size: Option<usize>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Generate one query per document (pairs.jsonl).
    Generate {
        /// Documents in corpus JSONL format, usually sampled.jsonl.
        #[arg(long)]
        docs: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Keep the best generated pairs (filtered.jsonl).
    Filter {
        #[arg(long)]
        pairs: PathBuf,
        /// Needed by v2 to score pairs against document text.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<FilterMode>,
        #[arg(long, value_name = "N")]
        keep_top: Option<usize>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Draw a BM25 negative for each pair (negatives.jsonl).
    MineNegatives {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        index: PathBuf,
        #[arg(long, value_name = "N")]
        pool_depth: Option<usize>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Write positive and negative training rows (trainset.tsv).
    BuildTrainset {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        negatives: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Shuffle a trainset into fixed-size batches (batches.jsonl).
    EmitBatches {
        #[arg(long)]
        trainset: PathBuf,
        #[arg(long, value_name = "N")]
        batch_pos: Option<usize>,
        #[arg(long, value_name = "N")]
        batch_neg: Option<usize>,
        #[command(flatten)]
        out: OutDir,
    },
    /// BM25 run for a query set (bm25.run).
    Retrieve {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, value_name = "N")]
        depth: Option<usize>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Rescore a run with the relevance model (reranked.run).
    Rerank {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Print the mean nDCG@k of a run.
    Evaluate {
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Print a dataset by system table with averages.
    Report {
        /// Wide CSV: `dataset,<system>...`.
        #[arg(long, conflicts_with = "metrics", required_unless_present = "metrics")]
        grid: Option<PathBuf>,
        /// metrics.json files, one row each.
        #[arg(long, num_args = 1..)]
        metrics: Vec<PathBuf>,
        /// Extra average over these datasets (comma separated).
        #[arg(long, value_delimiter = ',')]
        subset: Option<Vec<String>>,
        #[arg(long)]
        subset_label: Option<String>,
        #[arg(long, value_enum, default_value_t = Missing::Error)]
        missing: Missing,
        #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
        format: ReportFormat,
    },
    /// Every stage end to end, skipping stages whose outputs are current.
    RunAll {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        /// Row label in metrics.json and the report.
        #[arg(long, default_value = "dataset")]
        dataset: String,
        #[command(flatten)]
        out: OutDir,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Missing {
    Error,
    Blank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Csv,
}

fn push<T: serde::Serialize>(out: &mut Vec<Override>, key: &'static str, value: Option<T>) {
    if let Some(v) = value {
        out.push((key, json!(v)));
    }
}

impl Cli {
    /// Config keys set by flags, for the top layer of the settings.
    pub fn overrides(&self) -> Vec<Override> {
        let g = &self.global;
        let mut out = Vec::new();
        push(&mut out, "gateway.kind", g.gateway);
        push(&mut out, "gateway.url", g.gateway_url.clone());
        push(&mut out, "gateway.parallelism", g.parallelism);
        push(&mut out, "pipeline.rng_seed", g.seed);
        match &self.command {
            Command::Sample { sample_size, .. } => push(&mut out, "pipeline.sample_size", *sample_size),
            Command::Filter { mode, keep_top, .. } => {
                push(&mut out, "filter.mode", *mode);
                push(&mut out, "pipeline.keep_top", *keep_top);
            }
            Command::MineNegatives { pool_depth, .. } => {
                push(&mut out, "pipeline.negative_pool_depth", *pool_depth)
            }
            Command::EmitBatches {
                batch_pos, batch_neg, ..
            } => {
                push(&mut out, "pipeline.batch_pos", *batch_pos);
                push(&mut out, "pipeline.batch_neg", *batch_neg);
            }
            Command::Retrieve { depth, .. } => push(&mut out, "eval.depth", *depth),
            Command::Evaluate { k, .. } => push(&mut out, "eval.k", *k),
            _ => {}
        }
        out
    }
}
