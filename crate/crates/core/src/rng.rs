//! Counter-based seeding so parallel work items draw from fixed substreams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for work item `index` of purpose `domain` under a global seed.
pub fn derive_seed(seed: u64, domain: u64, index: u64) -> u64 {
    mix64(mix64(seed ^ mix64(domain)) ^ index)
}

/// Generator for `(domain, index)`; the index also selects the ChaCha stream.
pub fn stream_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(domain)));
    rng.set_stream(index);
    rng
}

pub mod domain {
    pub const NOISE: u64 = 1;
    pub const SELECT: u64 = 2;
    pub const SHIFT: u64 = 3;
    pub const PHANTOM: u64 = 4;
    pub const PATCH: u64 = 5;
    pub const SWEEP: u64 = 6;
}
