//! Seed derivation.
//!
//! All randomness comes from `ChaCha8Rng` (rand_chacha 0.3), whose output
//! stream is fixed by its specification, so a seed stored in an index file
//! regenerates the same hash functions on any build. Sub-seeds for the
//! different consumers are derived with the SplitMix64 finalizer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const RNG_ALGORITHM: &str = "chacha8/rand_chacha-0.3";

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, stream: u64) -> u64 {
    mix64(seed ^ mix64(stream))
}

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, stream))
}

// Stream tags.
pub const HASH_FUNCTIONS: u64 = 1;
pub const POOL_SAMPLING: u64 = 2;
pub const SKETCHES: u64 = 3;
pub const TABLES: u64 = 4;
