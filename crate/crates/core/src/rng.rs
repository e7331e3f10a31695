//! Seed derivation for independent, reproducible random streams.
//!
//! Every random decision in the crate draws from a ChaCha8 stream keyed by a
//! base seed and a path of stream indices, so results never depend on thread
//! scheduling or the order in which cells are evaluated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finaliser.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a sequence of stream indices.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(seed), |acc, &p| mix(acc ^ mix(p)))
}

pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive(seed, path))
}

/// Named stream tags keep unrelated consumers of one seed apart.
pub mod tag {
    pub const TEST_SPLIT: u64 = 0x7e57;
    pub const RUN_SPLIT: u64 = 0x5917;
    pub const BIAS: u64 = 0xb1a5;
    pub const MODEL: u64 = 0x30de1;
    pub const VALIDATION: u64 = 0xfa11;
    pub const SYNTH: u64 = 0x5eed;
}
