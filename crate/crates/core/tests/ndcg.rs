mod oracles;

use std::collections::BTreeMap;

use inpars_core::corpus::{Qrels, Run, ScoredDoc};
use inpars_core::{evaluate_run, ndcg_at_k, MetricsError};
use oracles::{brute_ndcg, gen};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn random_instance(rng: &mut impl Rng) -> (Vec<String>, BTreeMap<String, u32>, usize) {
    let pool = rng.random_range(1..40);
    let mut ids: Vec<String> = (0..pool).map(|i| format!("d{i}")).collect();
    let mut grades = BTreeMap::new();
    for id in &ids {
        if rng.random_bool(0.4) {
            grades.insert(id.clone(), rng.random_range(0..4));
        }
    }
    if !grades.values().any(|&g| g > 0) {
        grades.insert(ids[0].clone(), rng.random_range(1..4));
    }
    ids.shuffle(rng);
    ids.truncate(rng.random_range(0..=pool));
    (ids, grades, rng.random_range(1..15))
}

#[test]
fn matches_brute_force() {
    let mut rng = gen::rng(11);
    for _ in 0..1000 {
        let (ranking, grades, k) = random_instance(&mut rng);
        let got = ndcg_at_k(ranking.iter().map(String::as_str), &grades, k).unwrap();
        let want = brute_ndcg(&ranking, &grades, k);
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
}

#[test]
fn hand_example() {
    let grades: BTreeMap<String, u32> = [("d2".to_string(), 1)].into();
    let v = ndcg_at_k(["d1", "d2"], &grades, 10).unwrap();
    assert!((v - 1.0 / 3f64.log2()).abs() < 1e-12);
    assert!((v - 0.6309).abs() < 1e-4);
}

#[test]
fn perfect_rankings_are_exactly_one() {
    let mut rng = gen::rng(12);
    for _ in 0..200 {
        let (_, grades, k) = random_instance(&mut rng);
        let mut ideal: Vec<(&String, &u32)> = grades.iter().filter(|(_, &g)| g > 0).collect();
        ideal.sort_by(|a, b| b.1.cmp(a.1));
        let ranking: Vec<&str> = ideal.iter().map(|(d, _)| d.as_str()).collect();
        assert_eq!(ndcg_at_k(ranking, &grades, k).unwrap(), 1.0);
    }
}

#[test]
fn undefined_cases() {
    let grades: BTreeMap<String, u32> = [("a".to_string(), 0)].into();
    assert_eq!(ndcg_at_k(["a"], &grades, 10), Err(MetricsError::NoRelevant));
    let grades: BTreeMap<String, u32> = [("a".to_string(), 1)].into();
    assert_eq!(ndcg_at_k(["a"], &grades, 0), Err(MetricsError::ZeroCutoff));
}

fn run_of(rankings: &[(&str, &[&str])]) -> Run {
    let mut run = Run::new();
    for (q, docs) in rankings {
        let n = docs.len();
        run.insert(*q, docs.iter().enumerate().map(|(i, d)| ScoredDoc::new(*d, (n - i) as f64)).collect())
            .unwrap();
    }
    run
}

#[test]
fn five_query_fixture_mean() {
    let mut qrels = Qrels::new();
    for (q, d, g) in [
        ("q1", "a", 1),
        ("q2", "b", 2),
        ("q2", "c", 1),
        ("q3", "a", 1),
        ("q4", "d", 1),
        ("q5", "e", 0),
        ("q6", "f", 3),
    ] {
        qrels.insert(q, d, g);
    }
    let run = run_of(&[
        ("q1", &["a"]),
        ("q2", &["c", "b"]),
        ("q3", &["x", "y", "a"]),
        ("q5", &["e"]),
        ("q6", &["f"]),
        ("q9", &["a"]),
    ]);
    let r = evaluate_run(&run, &qrels, 10).unwrap();
    let l = |i: f64| (i + 1.0).log2();
    let q2 = (1.0 / l(1.0) + 2.0 / l(2.0)) / (2.0 / l(1.0) + 1.0 / l(2.0));
    let q3 = 1.0 / l(3.0);
    // q4 is judged but missing from the run; q5 has no positive grade.
    let expected = (1.0 + q2 + q3 + 0.0 + 1.0) / 5.0;
    assert_eq!(r.judged_query_count, 5);
    assert!((r.mean - expected).abs() < 1e-12);
    assert_eq!(r.per_query["q4"], 0.0);
    assert!(!r.per_query.contains_key("q5"));
    assert!(!r.per_query.contains_key("q9"));
}

#[test]
fn nothing_to_score() {
    let mut qrels = Qrels::new();
    qrels.insert("q", "d", 0);
    assert_eq!(evaluate_run(&Run::new(), &qrels, 10), Err(MetricsError::NothingToScore));
}

proptest! {
    #[test]
    fn in_unit_interval_and_truncation_stable(seed in any::<u64>(), extra in prop::collection::vec(0u32..60, 0..20)) {
        let (ranking, grades, k) = random_instance(&mut gen::rng(seed));
        let v = ndcg_at_k(ranking.iter().map(String::as_str), &grades, k).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        let mut longer: Vec<String> = ranking.iter().take(k).cloned().collect();
        while longer.len() < k {
            longer.push(format!("pad{}", longer.len()));
        }
        let head = ndcg_at_k(longer.iter().map(String::as_str), &grades, k).unwrap();
        longer.extend(extra.iter().map(|e| format!("d{e}")));
        let tail = ndcg_at_k(longer.iter().map(String::as_str), &grades, k).unwrap();
        prop_assert_eq!(head, tail);
    }
}
