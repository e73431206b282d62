//! Bounded top-k selection.
//!
//! Everything in this crate that ranks uses one order: score descending,
//! then a tie key ascending. [`RankKey`] encodes that order so "greater"
//! means "ranks earlier", and [`TopK`] keeps the k greatest keys seen.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

/// Ranking key: higher score first, then smaller tie key first.
#[derive(Debug, Clone, Copy)]
pub struct RankKey<T> {
    pub score: f64,
    pub tie: T,
}

impl<T: Ord> PartialEq for RankKey<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Ord> Eq for RankKey<T> {}

impl<T: Ord> PartialOrd for RankKey<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Ord> Ord for RankKey<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.tie.cmp(&self.tie))
    }
}

/// Keeps the `k` greatest items pushed so far in O(log k) per push.
#[derive(Debug)]
pub struct TopK<T: Ord> {
    k: usize,
    heap: BinaryHeap<Reverse<T>>,
}

impl<T: Ord> TopK<T> {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k.min(1 << 16) + 1),
        }
    }

    pub fn push(&mut self, item: T) {
        if self.k == 0 {
            return;
        }
        if self.heap.len() < self.k {
            self.heap.push(Reverse(item));
        } else if let Some(mut worst) = self.heap.peek_mut() {
            if item > worst.0 {
                *worst = Reverse(item);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Best first.
    pub fn into_sorted_vec(self) -> Vec<T> {
        // Ascending `Reverse<T>` is descending `T`.
        self.heap.into_sorted_vec().into_iter().map(|r| r.0).collect()
    }
}

/// Returns the `k` greatest items of `items`, best first.
pub fn top_k<T: Ord>(items: impl IntoIterator<Item = T>, k: usize) -> Vec<T> {
    let mut top = TopK::new(k);
    for item in items {
        top.push(item);
    }
    top.into_sorted_vec()
}
