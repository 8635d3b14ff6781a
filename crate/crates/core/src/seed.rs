//! Deterministic seed derivation.
//!
//! Every random stage gets its own stream derived from the caller's seed, a
//! stage tag and an index, so results never depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stage tags keep streams from different stages disjoint.
pub(crate) mod tag {
    pub const SAMPLE: u64 = 0x5341_4d50;
    pub const ATTEMPT: u64 = 0x4154_5450;
    pub const KMEANS: u64 = 0x4b4d_4e53;
    pub const RANSAC: u64 = 0x5253_4143;
    pub const GROUND: u64 = 0x4752_4e44;
    pub const TARGET: u64 = 0x5447_5420;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `base`, a stage `tag` and an `index` into a fresh seed.
pub fn derive(base: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ tag) ^ index)
}

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
