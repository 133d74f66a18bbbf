//! Seed derivation so that every stochastic step is reproducible and
//! independent of scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// A ChaCha stream keyed by a run seed plus a path of tags.
pub fn derive(seed: u64, tags: &[&[u8]]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for t in tags {
        h.update((t.len() as u64).to_le_bytes());
        h.update(t);
    }
    ChaCha8Rng::from_seed(h.finalize().into())
}

pub fn derive_str(seed: u64, tag: &str, index: u64) -> ChaCha8Rng {
    derive(seed, &[tag.as_bytes(), &index.to_le_bytes()])
}
