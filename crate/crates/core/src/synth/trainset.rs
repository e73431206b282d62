use std::collections::BTreeMap;

use crate::corpus::{Corpus, Label, TrainExample};

use super::{SynthError, SyntheticPair};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trainset {
    /// Positive then negative example for each surviving pair, in pair order.
    pub examples: Vec<TrainExample>,
    /// Pairs dropped because no negative could be mined.
    pub no_negative: usize,
}

impl Trainset {
    pub fn count(&self, label: Label) -> usize {
        self.examples.iter().filter(|e| e.label == label).count()
    }
}

/// `negatives` maps a positive doc id to its mined negative, `None` marking
/// a pair that got none.
pub fn build_trainset(
    positives: &[SyntheticPair],
    negatives: &BTreeMap<String, Option<String>>,
    corpus: &Corpus,
) -> Result<Trainset, SynthError> {
    let mut out = Trainset::default();
    for pair in positives {
        let negative = match negatives.get(&pair.doc_id) {
            Some(Some(n)) => n,
            Some(None) => {
                out.no_negative += 1;
                continue;
            }
            None => return Err(SynthError::MissingNegativeRecord(pair.doc_id.clone())),
        };
        out.examples.push(TrainExample {
            query: pair.query.clone(),
            doc_id: pair.doc_id.clone(),
            doc_text: corpus.flat_text(&pair.doc_id)?,
            label: Label::Positive,
        });
        out.examples.push(TrainExample {
            query: pair.query.clone(),
            doc_id: negative.clone(),
            doc_text: corpus.flat_text(negative)?,
            label: Label::Negative,
        });
    }
    Ok(out)
}
