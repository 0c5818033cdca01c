//! Seed derivation. Every random component draws from its own generator,
//! seeded from the master seed by fixed arithmetic, so any single bank,
//! forest or tree can be regenerated in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for all randomness in the crate.
pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for `stream` under `parent`.
pub fn derive(parent: u64, stream: u64) -> u64 {
    mix(parent ^ mix(stream.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

// Stream tags for the cascade. Level-scoped streams are offset by
// `level * LEVEL_STRIDE`.
pub const LEVEL_STRIDE: u64 = 1_000;
pub const STREAM_BANK: u64 = 0;
pub const STREAM_FOREST: u64 = 1; // + forest position (0..4)
pub const STREAM_SMOTE: u64 = 999_999_001;
pub const STREAM_SPLIT: u64 = 999_999_002;
