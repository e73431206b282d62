mod oracles;

use inpars_core::corpus::Corpus;
use inpars_core::gateway::{GatewayError, GenerationResult, ModelGateway, RelevanceScore};
use inpars_core::synth::{filter_v1, filter_v2, select_top_pairs};
use inpars_core::{Document, ScoreCache, SynthError, SyntheticPair};
use oracles::{full_sort_prefix, gen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Scores come from the number at the end of the query text.
struct Parsed;

impl ModelGateway for Parsed {
    fn generate(&self, _: &str, _: usize, _: &str) -> Result<GenerationResult, GatewayError> {
        unreachable!()
    }

    fn score(&self, query: &str, _: &str) -> Result<RelevanceScore, GatewayError> {
        RelevanceScore::new(query.rsplit(' ').next().unwrap().parse().unwrap())
    }

    fn parallelism(&self) -> usize {
        4
    }
}

fn random_scores(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // Every third set draws from a handful of values to force ties.
    let levels = [1, 3, 1000][rng.random_range(0..3)];
    (0..n).map(|_| rng.random_range(0..levels) as f64 / 7.0 - 5.0).collect()
}

fn pair_set(rng: &mut ChaCha8Rng) -> (Vec<SyntheticPair>, Vec<(String, f64)>, usize) {
    let n = rng.random_range(1..=5000);
    let scores = random_scores(rng, n);
    let doc_space = rng.random_range(1..=n * 2);
    let pairs: Vec<SyntheticPair> = scores
        .iter()
        .map(|&s| {
            let mut p = SyntheticPair::new(format!("d{:05}", rng.random_range(0..doc_space)), "q");
            p.mean_logprob = Some(s);
            p
        })
        .collect();
    let keyed = pairs.iter().map(|p| (p.doc_id.clone(), p.mean_logprob.unwrap())).collect();
    (pairs, keyed, rng.random_range(1..=1000))
}

#[test]
fn v1_equals_full_sort_prefix() {
    let mut rng = gen::rng(21);
    for _ in 0..100 {
        let (pairs, keyed, keep) = pair_set(&mut rng);
        let got = filter_v1(&pairs, keep).unwrap();
        let want: Vec<SyntheticPair> = full_sort_prefix(&keyed, keep).into_iter().map(|i| pairs[i].clone()).collect();
        assert_eq!(got, want);
    }
}

#[test]
fn selection_is_invariant_under_increasing_transforms() {
    let mut rng = gen::rng(22);
    let transforms: [fn(f64) -> f64; 3] = [|x| x.exp(), |x| 3.0 * x - 1.0, |x| x.powi(3)];
    for _ in 0..100 {
        let (pairs, _, keep) = pair_set(&mut rng);
        let base = select_top_pairs(&pairs, keep, |p| p.mean_logprob.unwrap());
        for f in transforms {
            let moved = select_top_pairs(&pairs, keep, |p| f(p.mean_logprob.unwrap()));
            assert_eq!(moved, base);
        }
    }
}

#[test]
fn v2_equals_full_sort_prefix() {
    let mut rng = gen::rng(23);
    for _ in 0..20 {
        let n = rng.random_range(1..=500);
        let scores = random_scores(&mut rng, n);
        let corpus = Corpus::from_documents((0..n).map(|i| Document::new(format!("d{i:04}"), "", "text"))).unwrap();
        let pairs: Vec<SyntheticPair> = scores
            .iter()
            .enumerate()
            .map(|(i, s)| SyntheticPair::new(format!("d{i:04}"), format!("q {s}")))
            .collect();
        let keyed: Vec<(String, f64)> = pairs.iter().map(|p| p.doc_id.clone()).zip(scores.iter().copied()).collect();
        let keep = rng.random_range(1..=60);
        let got = filter_v2(&pairs, &corpus, &Parsed, keep, &mut ScoreCache::in_memory()).unwrap();
        let want: Vec<String> = full_sort_prefix(&keyed, keep).into_iter().map(|i| pairs[i].doc_id.clone()).collect();
        assert_eq!(got.iter().map(|p| p.doc_id.clone()).collect::<Vec<_>>(), want);
        assert!(got.iter().all(|p| p.score.is_some()));
    }
}

#[test]
fn v2_resumes_from_cache() {
    let corpus = Corpus::from_documents((0..10).map(|i| Document::new(format!("d{i}"), "", "t"))).unwrap();
    let pairs: Vec<_> = (0..10).map(|i| SyntheticPair::new(format!("d{i}"), format!("q {i}"))).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.jsonl");
    let first = filter_v2(&pairs, &corpus, &Parsed, 3, &mut ScoreCache::open(&path).unwrap()).unwrap();

    struct Down;
    impl ModelGateway for Down {
        fn generate(&self, _: &str, _: usize, _: &str) -> Result<GenerationResult, GatewayError> {
            unreachable!()
        }
        fn score(&self, _: &str, _: &str) -> Result<RelevanceScore, GatewayError> {
            Err(GatewayError::Transport { attempts: 1, message: "down".into() })
        }
    }
    let again = filter_v2(&pairs, &corpus, &Down, 3, &mut ScoreCache::open(&path).unwrap()).unwrap();
    assert_eq!(first, again);
    let more: Vec<_> = (0..11).map(|i| SyntheticPair::new(format!("d{}", i % 10), format!("q {i}"))).collect();
    let err = filter_v2(&more, &corpus, &Down, 3, &mut ScoreCache::open(&path).unwrap()).unwrap_err();
    assert!(matches!(err, SynthError::Scoring(_)));
}
