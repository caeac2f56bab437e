//! Stable seed derivation.
//!
//! Seeds are derived by hashing rather than by sequencing a generator so that every
//! consumer (a user's split, a repetition, a model) gets the same stream regardless of
//! iteration order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives a 64-bit seed from a base seed and an arbitrary key.
pub fn keyed_seed(seed: u64, key: &[u8]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((key.len() as u64).to_le_bytes());
    h.update(key);
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest is 32 bytes"))
}

pub fn keyed_rng(seed: u64, key: &[u8]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(keyed_seed(seed, key))
}

/// Seed of repetition `rep` of an experiment.
pub fn repetition_seed(seed: u64, rep: usize) -> u64 {
    keyed_seed(seed, format!("repetition/{rep}").as_bytes())
}
