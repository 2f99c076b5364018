//! Seed derivation. Every random stream in the crate comes from a
//! `ChaCha8Rng` seeded through [`derive_seed`], so runs are reproducible
//! and independent of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags used with [`derive_seed`].
pub mod stream {
    pub const INIT: u64 = 1;
    pub const BATCH: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const MASK: u64 = 4;
    pub const RENDER: u64 = 5;
    pub const DOWNSAMPLE: u64 = 6;
    pub const EPOCH: u64 = 7;
    pub const SAMPLE: u64 = 8;
    pub const TEST_SET: u64 = 9;
    pub const DIAGNOSTIC: u64 = 10;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a stream tag and an index into a new seed.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ stream.rotate_left(17)) ^ index)
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
