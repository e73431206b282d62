use crate::corpus::{CorpusError, Document};
use crate::rng;

use super::SynthError;

/// Uniform sample without replacement of `min(n, corpus size)` documents in
/// one pass over `corpus` (reservoir algorithm R). The result is returned in
/// corpus order.
pub fn sample_documents<I>(corpus: I, n: usize, seed: u64) -> Result<Vec<Document>, SynthError>
where
    I: IntoIterator<Item = Result<Document, CorpusError>>,
{
    if n == 0 {
        return Err(SynthError::Config("sample size must be positive".into()));
    }
    let mut rng = rng::substream(seed, "sample-documents", b"");
    let mut reservoir: Vec<(usize, Document)> = Vec::with_capacity(n.min(1 << 20));
    let mut seen = 0usize;
    for doc in corpus {
        let doc = doc?;
        if reservoir.len() < n {
            reservoir.push((seen, doc));
        } else {
            let j = rng::index(&mut rng, seen + 1);
            if j < n {
                reservoir[j] = (seen, doc);
            }
        }
        seen += 1;
    }
    if seen == 0 {
        return Err(SynthError::EmptyInput("corpus"));
    }
    reservoir.sort_unstable_by_key(|(pos, _)| *pos);
    Ok(reservoir.into_iter().map(|(_, d)| d).collect())
}
