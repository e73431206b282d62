//! Seeded randomness.
//!
//! Every random decision draws from a ChaCha8 stream whose 256-bit seed is
//! `SHA-256(domain || root seed || purpose || key)`. Stages therefore never
//! share state: sampling documents, picking a negative for one pair, and
//! shuffling batches are each reproducible on their own.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StageRng = ChaCha8Rng;

pub fn substream(seed: u64, purpose: &str, key: &[u8]) -> StageRng {
    let mut h = Sha256::new();
    h.update(b"inpars.rng.v1");
    h.update(seed.to_le_bytes());
    h.update((purpose.len() as u64).to_le_bytes());
    h.update(purpose.as_bytes());
    h.update(key);
    let digest: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

/// Uniform index in `0..n`; `n` must be positive.
pub fn index(rng: &mut StageRng, n: usize) -> usize {
    rng.random_range(0..n as u64) as usize
}

/// In-place Fisher-Yates shuffle.
pub fn shuffle<T>(rng: &mut StageRng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = index(rng, i + 1);
        items.swap(i, j);
    }
}
