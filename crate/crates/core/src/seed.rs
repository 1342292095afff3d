//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed from one user seed plus a stream tag and an index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, stream: u64, index: u64) -> u64 {
    mix64(mix64(seed ^ mix64(stream)).wrapping_add(index))
}

pub fn rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, stream, index))
}

/// Stream tags.
pub mod stream {
    pub const LAYOUT: u64 = 1;
    pub const TIMELINE: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const MARGIN: u64 = 4;
    pub const OTHER_CROP: u64 = 5;
    pub const SHUFFLE: u64 = 6;
    pub const SPLIT: u64 = 7;
    pub const REBALANCE: u64 = 8;
    pub const CROP_SET: u64 = 9;
    pub const BACKGROUND: u64 = 10;
    /// Seeds of evaluation data kept apart from anything used for training.
    pub const HELD_OUT: u64 = 11;
    pub const PRETRAIN: u64 = 12;
}
