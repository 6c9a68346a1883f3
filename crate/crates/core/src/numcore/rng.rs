//! Seed derivation for reproducible, order-independent randomness.
//!
//! Every random draw in training is made from a generator seeded by
//! `derive_seed(master, stream, counter)`, so a sample's augmentation depends
//! only on its identity and never on how many draws happened before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

/// Named streams keep unrelated consumers of randomness apart.
pub mod stream {
    pub const INIT_ENCODER: u64 = 1;
    pub const INIT_PMNN: u64 = 2;
    pub const INIT_PROBE: u64 = 3;
    pub const SHUFFLE: u64 = 4;
    pub const WEAK_QUERY: u64 = 5;
    pub const WEAK_KEY: u64 = 6;
    pub const COMPOSITE: u64 = 7;
    pub const LABELED: u64 = 8;
    pub const DATASET: u64 = 9;
    pub const SPLIT: u64 = 10;
    pub const LINEAR_EVAL: u64 = 11;
    pub const DACL: u64 = 12;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed, a stream id and a counter into one child seed.
pub fn derive_seed(master: u64, stream: u64, counter: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93)) ^ counter)
}

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(master: u64, stream: u64, counter: u64) -> SeededRng {
    rng_from_seed(derive_seed(master, stream, counter))
}
