use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use inpars_core::corpus::{load_corpus, load_qrels, load_queries, load_run, load_trainset, write_corpus, write_run, write_trainset};
use inpars_core::eval::{rerank, retrieve_all, MetricsReport, BM25_TAG};
use inpars_core::index::IndexBuilder;
use inpars_core::prompt::{load_few_shot, parse_few_shot, DEFAULT_FEW_SHOT};
use inpars_core::report::load_grid_csv;
use inpars_core::synth::{
    build_trainset, emit_batches, filter_v1, filter_v2, generate_queries, load_pairs, mine_negatives, sample_documents,
    write_batches, write_pairs, GenerationCheckpoint,
};
use inpars_core::{
    aggregate_report, evaluate_run, Corpus, Document, InvertedIndex, Label, MissingCells, PromptTemplate, ReportOptions,
    ResultGrid, ScoreCache,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::args::{Missing, ReportFormat};
use crate::config::{CliConfig, FilterMode};
use crate::stages::{counters, fingerprint, short_hash, Counters, Workspace};

pub const INDEX: &str = "index.json";
pub const SAMPLED: &str = "sampled.jsonl";
pub const PAIRS: &str = "pairs.jsonl";
pub const FILTERED: &str = "filtered.jsonl";
pub const NEGATIVES: &str = "negatives.jsonl";
pub const TRAINSET: &str = "trainset.tsv";
pub const BATCHES: &str = "batches.jsonl";
pub const BM25_RUN: &str = "bm25.run";
pub const RERANKED_RUN: &str = "reranked.run";
pub const METRICS: &str = "metrics.json";
pub const REPORT_TXT: &str = "report.txt";
pub const REPORT_CSV: &str = "report.csv";

const CACHE_DIR: &str = "cache";
const RERANKED_SYSTEM: &str = "Reranked";

pub fn index(ws: &mut Workspace, cfg: &CliConfig, corpus: &Path) -> Result<()> {
    let fp = fingerprint("index", &(&cfg.analyzer, &cfg.bm25), &[corpus])?;
    ws.stage("index", &fp, &[INDEX], |dir| {
        let mut builder = IndexBuilder::new(cfg.analyzer.analyzer(), cfg.bm25)?;
        for doc in load_corpus(corpus)? {
            builder.add(&doc?)?;
        }
        let index = builder.finish();
        index.save(dir.join(INDEX))?;
        Ok(counters([("indexed_docs", index.doc_count())]))
    })?;
    Ok(())
}

pub fn sample(ws: &mut Workspace, cfg: &CliConfig, corpus: &Path) -> Result<()> {
    let p = &cfg.pipeline;
    let fp = fingerprint("sample", &(p.sample_size, p.rng_seed), &[corpus])?;
    ws.stage("sample", &fp, &[SAMPLED], |dir| {
        let docs = sample_documents(load_corpus(corpus)?, p.sample_size, p.rng_seed)?;
        if docs.len() < p.sample_size {
            log::warn!("corpus has only {} documents; sampled all of them", docs.len());
        }
        write_corpus(&docs, dir.join(SAMPLED))?;
        Ok(counters([("sampled_docs", docs.len())]))
    })?;
    Ok(())
}

fn prompt_inputs(cfg: &CliConfig) -> Result<(PromptTemplate, Vec<inpars_core::FewShotExample>)> {
    let template = match &cfg.prompt.template {
        Some(path) => PromptTemplate::load(path).with_context(|| format!("template {}", path.display()))?,
        None => PromptTemplate::gbq(),
    };
    let mut examples = match &cfg.prompt.few_shot {
        Some(path) => load_few_shot(path).with_context(|| format!("few-shot file {}", path.display()))?,
        None => parse_few_shot(DEFAULT_FEW_SHOT)?,
    };
    let want = cfg.pipeline.few_shot_count;
    if examples.len() < want {
        bail!("few_shot_count is {want} but only {} examples are available", examples.len());
    }
    examples.truncate(want);
    Ok((template, examples))
}

pub fn generate(ws: &mut Workspace, cfg: &CliConfig, docs: &Path) -> Result<()> {
    let p = &cfg.pipeline;
    let mut inputs: Vec<&Path> = vec![docs];
    inputs.extend(cfg.prompt.template.as_deref());
    inputs.extend(cfg.prompt.few_shot.as_deref());
    let params = json!({
        "model": cfg.gateway.identity(None),
        "max_new_tokens": p.max_new_tokens,
        "max_doc_chars": p.max_doc_chars,
        "logprob_mode": p.logprob_mode,
        "few_shot_count": p.few_shot_count,
        "builtin_prompt": env!("CARGO_PKG_VERSION"),
    });
    let fp = fingerprint("generate", &params, &inputs)?;
    ws.stage("generate", &fp, &[PAIRS], |dir| {
        let (template, examples) = prompt_inputs(cfg)?;
        let docs: Vec<Document> = load_corpus(docs)?.collect::<Result<_, _>>()?;
        let gateway = cfg.gateway.build(None)?;
        let ckpt_path = dir.join(format!("generate-{}.ckpt.jsonl", &fp[..12]));
        let mut ckpt = GenerationCheckpoint::open(&ckpt_path)?;
        if ckpt.completed() > 0 {
            log::info!("resuming generation: {} documents already done", ckpt.completed());
        }
        let out = generate_queries(&docs, &template, &examples, &*gateway, &p.generation(), Some(&mut ckpt))?;
        drop(ckpt);
        write_pairs(&out.pairs, dir.join(PAIRS))?;
        std::fs::remove_file(&ckpt_path).with_context(|| format!("remove {}", ckpt_path.display()))?;
        let mut seen = HashSet::new();
        let duplicates = out.pairs.iter().filter(|pair| !seen.insert(pair.query.as_str())).count();
        if out.degenerate > 0 {
            log::warn!("{} documents produced no usable query", out.degenerate);
        }
        Ok(counters([
            ("generated_pairs", out.pairs.len()),
            ("degenerate_generations", out.degenerate),
            ("duplicate_queries", duplicates),
            ("resumed_generations", out.resumed),
        ]))
    })?;
    Ok(())
}

fn score_cache(dir: &Path, stage: &str, identity: &str) -> Result<ScoreCache> {
    let cache_dir = dir.join(CACHE_DIR);
    std::fs::create_dir_all(&cache_dir).with_context(|| format!("create {}", cache_dir.display()))?;
    Ok(ScoreCache::open(cache_dir.join(format!("{stage}-{}.jsonl", short_hash(identity))))?)
}

pub fn filter(ws: &mut Workspace, cfg: &CliConfig, pairs: &Path, corpus: Option<&Path>) -> Result<()> {
    let keep_top = cfg.pipeline.keep_top;
    let mode = cfg.filter.mode;
    let mut inputs = vec![pairs];
    let identity = match mode {
        FilterMode::V1 => None,
        FilterMode::V2 => {
            let Some(corpus) = corpus else {
                bail!("filter mode v2 needs --corpus");
            };
            inputs.push(corpus);
            Some(cfg.gateway.identity(None))
        }
    };
    let fp = fingerprint("filter", &(mode, keep_top, &identity), &inputs)?;
    ws.stage("filter", &fp, &[FILTERED], |dir| {
        let pairs = load_pairs(pairs)?;
        let kept = match (mode, corpus, &identity) {
            (FilterMode::V2, Some(corpus), Some(identity)) => {
                let corpus = Corpus::load(corpus)?;
                let gateway = cfg.gateway.build(None)?;
                let mut cache = score_cache(dir, "filter", identity)?;
                filter_v2(&pairs, &corpus, &*gateway, keep_top, &mut cache)?
            }
            _ => filter_v1(&pairs, keep_top)?,
        };
        if kept.len() < keep_top {
            log::warn!("only {} pairs available; kept all of them", kept.len());
        }
        write_pairs(&kept, dir.join(FILTERED))?;
        Ok(counters([("kept_pairs", kept.len())]))
    })?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct NegativeRecord {
    doc_id: String,
    negative: Option<String>,
}

fn write_negatives(negatives: &BTreeMap<String, Option<String>>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("create {}", path.display()))?);
    for (doc_id, negative) in negatives {
        let rec = NegativeRecord {
            doc_id: doc_id.clone(),
            negative: negative.clone(),
        };
        writeln!(w, "{}", serde_json::to_string(&rec)?)?;
    }
    w.flush()?;
    Ok(())
}

fn load_negatives(path: &Path) -> Result<BTreeMap<String, Option<String>>> {
    let file = File::open(path).with_context(|| format!("open {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: NegativeRecord =
            serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        out.insert(rec.doc_id, rec.negative);
    }
    Ok(out)
}

pub fn mine(ws: &mut Workspace, cfg: &CliConfig, pairs: &Path, index: &Path) -> Result<()> {
    let p = &cfg.pipeline;
    let fp = fingerprint("mine-negatives", &(p.negative_pool_depth, p.rng_seed), &[pairs, index])?;
    ws.stage("mine-negatives", &fp, &[NEGATIVES], |dir| {
        let pairs = load_pairs(pairs)?;
        let index = InvertedIndex::load(index)?;
        let mined = mine_negatives(&pairs, &index, p.negative_pool_depth, p.rng_seed);
        if mined.no_negative > 0 {
            log::warn!("{} pairs got no negative", mined.no_negative);
        }
        write_negatives(&mined.negatives, &dir.join(NEGATIVES))?;
        Ok(counters([("no_negative", mined.no_negative)]))
    })?;
    Ok(())
}

pub fn trainset(ws: &mut Workspace, pairs: &Path, negatives: &Path, corpus: &Path) -> Result<()> {
    let fp = fingerprint("build-trainset", &(), &[pairs, negatives, corpus])?;
    ws.stage("build-trainset", &fp, &[TRAINSET], |dir| {
        let pairs = load_pairs(pairs)?;
        let negatives = load_negatives(negatives)?;
        let corpus = Corpus::load(corpus)?;
        let set = build_trainset(&pairs, &negatives, &corpus)?;
        write_trainset(&set.examples, dir.join(TRAINSET))?;
        Ok(counters([
            ("trainset_positives", set.count(Label::Positive)),
            ("trainset_negatives", set.count(Label::Negative)),
        ]))
    })?;
    Ok(())
}

pub fn batches(ws: &mut Workspace, cfg: &CliConfig, trainset: &Path) -> Result<()> {
    let p = &cfg.pipeline;
    let fp = fingerprint("emit-batches", &(p.batch_pos, p.batch_neg, p.rng_seed), &[trainset])?;
    ws.stage("emit-batches", &fp, &[BATCHES], |dir| {
        let rows = load_trainset(trainset)?;
        let batches = emit_batches(&rows, p.batch_pos, p.batch_neg, p.rng_seed)?;
        write_batches(&batches, dir.join(BATCHES))?;
        Ok(counters([("batches", batches.len())]))
    })?;
    Ok(())
}

/// BM25 run over `queries`, restricted to the queries judged in `qrels`
/// when given.
pub fn retrieve(ws: &mut Workspace, cfg: &CliConfig, index: &Path, queries: &Path, qrels: Option<&Path>) -> Result<()> {
    let mut inputs = vec![index, queries];
    inputs.extend(qrels);
    let fp = fingerprint("retrieve", &cfg.eval.depth, &inputs)?;
    ws.stage("retrieve", &fp, &[BM25_RUN], |dir| {
        let index = InvertedIndex::load(index)?;
        let mut queries = load_queries(queries)?;
        if let Some(qrels) = qrels {
            let qrels = load_qrels(qrels)?;
            queries.retain(|q| qrels.get(&q.id).is_some());
        }
        let run = retrieve_all(&index, &queries, cfg.eval.depth);
        write_run(&run, BM25_TAG, dir.join(BM25_RUN))?;
        Ok(counters([("retrieved_queries", run.query_count())]))
    })?;
    Ok(())
}

pub fn rerank_run(ws: &mut Workspace, cfg: &CliConfig, run: &Path, queries: &Path, corpus: &Path) -> Result<()> {
    let url = cfg.eval.scorer_url.as_deref();
    let identity = cfg.gateway.identity(url);
    let fp = fingerprint("rerank", &(&identity, &cfg.eval.scorer_tag), &[run, queries, corpus])?;
    ws.stage("rerank", &fp, &[RERANKED_RUN], |dir| {
        let first = load_run(run)?;
        let queries = load_queries(queries)?;
        let corpus = Corpus::load(corpus)?;
        let gateway = cfg.gateway.build(url)?;
        let mut cache = score_cache(dir, "rerank", &identity)?;
        let reranked = rerank(&first, &queries, &corpus, &*gateway, &mut cache)?;
        write_run(&reranked, &cfg.eval.scorer_tag, dir.join(RERANKED_RUN))?;
        Ok(Counters::new())
    })?;
    Ok(())
}

/// Mean nDCG@k of a run file.
pub fn evaluate(cfg: &CliConfig, qrels: &Path, run: &Path) -> Result<f64> {
    let qrels = load_qrels(qrels)?;
    let run = load_run(run)?;
    Ok(evaluate_run(&run, &qrels, cfg.eval.k)?.mean)
}

fn metrics_stage(ws: &mut Workspace, cfg: &CliConfig, dataset: &str, qrels: &Path) -> Result<()> {
    let bm25_run = ws.path(BM25_RUN);
    let reranked_run = ws.path(RERANKED_RUN);
    let fp = fingerprint("evaluate", &(dataset, cfg.eval.k), &[qrels, &bm25_run, &reranked_run])?;
    ws.stage("evaluate", &fp, &[METRICS], |dir| {
        let qrels = load_qrels(qrels)?;
        let bm25 = evaluate_run(&load_run(&bm25_run)?, &qrels, cfg.eval.k)?;
        let reranked = evaluate_run(&load_run(&reranked_run)?, &qrels, cfg.eval.k)?;
        MetricsReport::new(dataset, &bm25, &reranked).save(dir.join(METRICS))?;
        Ok(counters([("judged_queries", bm25.judged_query_count)]))
    })?;
    Ok(())
}

fn metrics_grid(files: &[PathBuf]) -> Result<ResultGrid> {
    let mut grid = ResultGrid::new();
    for path in files {
        let m = MetricsReport::load(path)?;
        if grid.contains_key(&m.dataset) {
            bail!("dataset `{}` appears in more than one metrics file", m.dataset);
        }
        let row = [("BM25".to_string(), m.bm25_ndcg10), (RERANKED_SYSTEM.to_string(), m.reranked_ndcg10)];
        grid.insert(m.dataset, row.into_iter().collect());
    }
    Ok(grid)
}

pub struct ReportRequest<'a> {
    pub grid: Option<&'a Path>,
    pub metrics: &'a [PathBuf],
    pub subset: Option<Vec<String>>,
    pub subset_label: Option<String>,
    pub missing: Missing,
    pub format: ReportFormat,
}

pub fn report(req: ReportRequest<'_>) -> Result<String> {
    let grid = match req.grid {
        Some(path) => load_grid_csv(path)?,
        None => metrics_grid(req.metrics)?,
    };
    let options = ReportOptions {
        subset: req.subset,
        subset_label: req.subset_label,
        missing: match req.missing {
            Missing::Error => MissingCells::Error,
            Missing::Blank => MissingCells::Blank,
        },
    };
    let report = aggregate_report(&grid, &options)?;
    Ok(match req.format {
        ReportFormat::Text => report.render_text(),
        ReportFormat::Csv => report.render_csv()?,
    })
}

fn report_stage(ws: &mut Workspace) -> Result<()> {
    let metrics = ws.path(METRICS);
    let fp = fingerprint("report", &(), &[&metrics])?;
    ws.stage("report", &fp, &[REPORT_TXT, REPORT_CSV], |dir| {
        let files = [metrics.clone()];
        for (name, format) in [(REPORT_TXT, ReportFormat::Text), (REPORT_CSV, ReportFormat::Csv)] {
            let text = report(ReportRequest {
                grid: None,
                metrics: &files,
                subset: None,
                subset_label: None,
                missing: Missing::Error,
                format,
            })?;
            std::fs::write(dir.join(name), text)?;
        }
        Ok(Counters::new())
    })?;
    Ok(())
}

pub struct RunAllInputs<'a> {
    pub corpus: &'a Path,
    pub queries: &'a Path,
    pub qrels: &'a Path,
    pub dataset: &'a str,
}

/// Every stage in order. Each stage reads the previous stages' files from
/// the workspace and is skipped when its inputs, settings and outputs are
/// unchanged since it last ran.
pub fn run_all(ws: &mut Workspace, cfg: &CliConfig, inputs: &RunAllInputs<'_>) -> Result<()> {
    let p = |name: &str| ws.path(name);
    let (index_path, sampled, pairs, filtered, negatives, train, bm25) =
        (p(INDEX), p(SAMPLED), p(PAIRS), p(FILTERED), p(NEGATIVES), p(TRAINSET), p(BM25_RUN));
    index(ws, cfg, inputs.corpus)?;
    sample(ws, cfg, inputs.corpus)?;
    generate(ws, cfg, &sampled)?;
    filter(ws, cfg, &pairs, Some(inputs.corpus))?;
    mine(ws, cfg, &filtered, &index_path)?;
    trainset(ws, &filtered, &negatives, inputs.corpus)?;
    batches(ws, cfg, &train)?;
    retrieve(ws, cfg, &index_path, inputs.queries, Some(inputs.qrels))?;
    rerank_run(ws, cfg, &bm25, inputs.queries, inputs.corpus)?;
    metrics_stage(ws, cfg, inputs.dataset, inputs.qrels)?;
    report_stage(ws)?;
    Ok(())
}
