//! Deterministic derivation of RNG streams from a single top-level seed.
//!
//! Every consumer of randomness gets its own stream, derived from the run
//! seed by hashing a purpose label and a list of indices with FNV-1a. The
//! scheme is spelled out here (rather than relying on `DefaultHasher`,
//! whose output is not stable across releases) so that results can be
//! reproduced from the manifest alone, and so that running trials in
//! parallel cannot perturb them.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x100_0000_01b3;

/// FNV-1a over `seed || label || indices`, all integers little-endian.
pub fn derive(seed: u64, label: &str, indices: &[u64]) -> u64 {
    let mut h = FNV_OFFSET;
    let mut eat = |byte: u8| {
        h ^= u64::from(byte);
        h = h.wrapping_mul(FNV_PRIME);
    };
    for b in seed.to_le_bytes() {
        eat(b);
    }
    for b in label.as_bytes() {
        eat(*b);
    }
    for idx in indices {
        for b in idx.to_le_bytes() {
            eat(b);
        }
    }
    h
}

/// A ChaCha stream seeded from [`derive`].
pub fn stream(seed: u64, label: &str, indices: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, label, indices))
}
