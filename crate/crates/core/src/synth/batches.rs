use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Label, Labeled};
use crate::rng;

use super::SynthError;

/// One training batch. Ids are 0-based row positions in the trainset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub batch: usize,
    pub positive_ids: Vec<usize>,
    pub negative_ids: Vec<usize>,
}

/// One epoch of batches. Each label is shuffled on its own stream and dealt
/// out in chunks; the epoch ends when either label runs short, so no example
/// appears twice and the last partial batch is dropped.
pub fn emit_batches<T: Labeled>(
    trainset: &[T],
    batch_pos: usize,
    batch_neg: usize,
    seed: u64,
) -> Result<Vec<Batch>, SynthError> {
    if batch_pos == 0 || batch_neg == 0 {
        return Err(SynthError::Config("batch sizes must be positive".into()));
    }
    let ids = |label| -> Vec<usize> {
        trainset
            .iter()
            .enumerate()
            .filter(|(_, e)| e.label() == label)
            .map(|(i, _)| i)
            .collect()
    };
    let mut pos = ids(Label::Positive);
    let mut neg = ids(Label::Negative);
    if pos.len() < batch_pos || neg.len() < batch_neg {
        return Err(SynthError::TooFewExamples {
            positives: pos.len(),
            negatives: neg.len(),
            need_pos: batch_pos,
            need_neg: batch_neg,
        });
    }
    rng::shuffle(&mut rng::substream(seed, "batches", b"positive"), &mut pos);
    rng::shuffle(&mut rng::substream(seed, "batches", b"negative"), &mut neg);
    Ok(pos
        .chunks_exact(batch_pos)
        .zip(neg.chunks_exact(batch_neg))
        .enumerate()
        .map(|(batch, (p, n))| Batch {
            batch,
            positive_ids: p.to_vec(),
            negative_ids: n.to_vec(),
        })
        .collect())
}

pub fn write_batches(batches: &[Batch], path: impl AsRef<Path>) -> Result<(), SynthError> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| SynthError::io(path, e))?);
    for b in batches {
        let line = serde_json::to_string(b).expect("batch serializes");
        writeln!(w, "{line}").map_err(|e| SynthError::io(path, e))?;
    }
    w.flush().map_err(|e| SynthError::io(path, e))
}

pub fn load_batches(path: impl AsRef<Path>) -> Result<Vec<Batch>, SynthError> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path).map_err(|e| SynthError::io(path, e))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| SynthError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| SynthError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}
