use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use inpars_core::synth::filter_v1;
use inpars_core::{build_index, ndcg_at_k, Analyzer, Bm25Params, Document, SyntheticPair};

/// Cheap deterministic stream; benchmarks only need stable inputs.
struct Lcg(u64);

impl Lcg {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        self.0 >> 33
    }

    fn below(&mut self, n: u64) -> u64 {
        self.next() % n
    }
}

fn corpus(n: usize, vocab: u64) -> Vec<Document> {
    let mut r = Lcg(n as u64);
    (0..n)
        .map(|i| {
            let len = 20 + r.below(80);
            // Squaring skews word frequencies toward low ids.
            let words: Vec<String> = (0..len)
                .map(|_| {
                    let x = r.below(vocab);
                    format!("t{}", x * x / vocab)
                })
                .collect();
            Document::new(format!("d{i}"), "", words.join(" "))
        })
        .collect()
}

fn indexing(c: &mut Criterion) {
    let mut g = c.benchmark_group("build_index");
    g.sample_size(10);
    for n in [1_000, 10_000] {
        let docs = corpus(n, 5_000);
        g.throughput(Throughput::Elements(n as u64));
        g.bench_with_input(BenchmarkId::from_parameter(n), &docs, |b, docs| {
            b.iter(|| build_index(docs, Analyzer::english(), Bm25Params::default()).unwrap())
        });
    }
    g.finish();
}

fn search(c: &mut Criterion) {
    let docs = corpus(20_000, 5_000);
    let index = build_index(&docs, Analyzer::plain(), Bm25Params::default()).unwrap();
    let queries = ["t1 t40 t900", "t3", "t2000 t2100 t2200 t2300 t2400 t2500", "t0 t1 t2 t3"];
    let mut g = c.benchmark_group("search_topk");
    for k in [10, 1000] {
        g.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, &k| {
            b.iter(|| {
                for q in queries {
                    black_box(index.search_topk(q, k));
                }
            })
        });
    }
    g.finish();
}

fn metrics(c: &mut Criterion) {
    let mut r = Lcg(7);
    let grades: BTreeMap<String, u32> = (0..200).map(|i| (format!("d{i}"), r.below(3) as u32)).collect();
    let ranking: Vec<String> = (0..1000).map(|_| format!("d{}", r.below(400))).collect();
    c.bench_function("ndcg_at_10", |b| {
        b.iter(|| ndcg_at_k(ranking.iter().map(String::as_str), black_box(&grades), 10).unwrap())
    });
}

fn filtering(c: &mut Criterion) {
    let mut r = Lcg(11);
    let pairs: Vec<SyntheticPair> = (0..100_000)
        .map(|i| SyntheticPair {
            mean_logprob: Some(-(r.below(1_000_000) as f64) / 1e5),
            ..SyntheticPair::new(format!("d{i}"), "q")
        })
        .collect();
    c.bench_function("filter_v1_100k_keep_10k", |b| b.iter(|| filter_v1(black_box(&pairs), 10_000).unwrap()));
}

criterion_group!(benches, indexing, search, metrics, filtering);
criterion_main!(benches);
