//! Named, splittable random streams.
//!
//! Every random draw in the toolkit comes from a stream keyed by
//! `(seed, purpose, indices)`, so reordering work (prefetch, per-class
//! generation, parallel sweeps) never changes results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

fn key(seed: u64, purpose: &str, indices: &[u64]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((purpose.len() as u64).to_le_bytes());
    h.update(purpose.as_bytes());
    for i in indices {
        h.update(i.to_le_bytes());
    }
    let digest = h.finalize();
    let mut out = [0u8; 32];
    out.copy_from_slice(&digest);
    out
}

/// A fresh generator for the stream `(seed, purpose, indices)`.
pub fn stream(seed: u64, purpose: &str, indices: &[u64]) -> StreamRng {
    ChaCha8Rng::from_seed(key(seed, purpose, indices))
}

/// A child seed for the stream `(seed, purpose, indices)`.
pub fn derive_seed(seed: u64, purpose: &str, indices: &[u64]) -> u64 {
    let k = key(seed, purpose, indices);
    u64::from_le_bytes(k[..8].try_into().unwrap())
}
