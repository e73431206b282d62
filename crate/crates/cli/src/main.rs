use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;

mod args;
mod commands;
mod config;
mod stages;

use args::{Cli, Command};
use commands::{ReportRequest, RunAllInputs};
use config::CliConfig;
use stages::Workspace;

const EXIT_USAGE: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

/// The error chain on one line. Causes already quoted by the message above
/// them are left out.
fn describe(e: &anyhow::Error) -> String {
    let mut out = e.to_string();
    let mut last = out.clone();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !last.contains(&text) {
            out.push_str(": ");
            out.push_str(&text);
        }
        last = text;
    }
    out
}

fn run(cli: Cli) -> Result<()> {
    let cfg = CliConfig::resolve(cli.global.config.as_deref(), &cli.overrides())?;
    let open = |dir: &std::path::Path, skip| Workspace::open(dir, &cfg, skip);
    match &cli.command {
        Command::Index { corpus, out } => commands::index(&mut open(&out.out_dir, false)?, &cfg, corpus),
        Command::Sample { corpus, out, .. } => commands::sample(&mut open(&out.out_dir, false)?, &cfg, corpus),
        Command::Generate { docs, out } => commands::generate(&mut open(&out.out_dir, false)?, &cfg, docs),
        Command::Filter { pairs, corpus, out, .. } => {
            commands::filter(&mut open(&out.out_dir, false)?, &cfg, pairs, corpus.as_deref())
        }
        Command::MineNegatives { pairs, index, out, .. } => {
            commands::mine(&mut open(&out.out_dir, false)?, &cfg, pairs, index)
        }
        Command::BuildTrainset {
            pairs,
            negatives,
            corpus,
            out,
        } => commands::trainset(&mut open(&out.out_dir, false)?, pairs, negatives, corpus),
        Command::EmitBatches { trainset, out, .. } => {
            commands::batches(&mut open(&out.out_dir, false)?, &cfg, trainset)
        }
        Command::Retrieve { index, queries, out, .. } => {
            commands::retrieve(&mut open(&out.out_dir, false)?, &cfg, index, queries, None)
        }
        Command::Rerank {
            run,
            queries,
            corpus,
            out,
        } => commands::rerank_run(&mut open(&out.out_dir, false)?, &cfg, run, queries, corpus),
        Command::Evaluate { qrels, run, .. } => {
            let mean = commands::evaluate(&cfg, qrels, run)?;
            println!("{mean}");
            Ok(())
        }
        Command::Report {
            grid,
            metrics,
            subset,
            subset_label,
            missing,
            format,
        } => {
            let text = commands::report(ReportRequest {
                grid: grid.as_deref(),
                metrics,
                subset: subset.clone(),
                subset_label: subset_label.clone(),
                missing: *missing,
                format: *format,
            })?;
            print!("{text}");
            Ok(())
        }
        Command::RunAll {
            corpus,
            queries,
            qrels,
            dataset,
            out,
        } => commands::run_all(
            &mut open(&out.out_dir, true)?,
            &cfg,
            &RunAllInputs {
                corpus,
                queries,
                qrels,
                dataset,
            },
        ),
    }
}
