//! Seed fan-out. Every random consumer draws from its own ChaCha stream of
//! the single user seed, so any sub-sweep can be regenerated in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub mod streams {
    pub const LAYOUT: u64 = 1;
    pub const MISMATCH: u64 = 2;
    pub const RP_CAMPAIGN: u64 = 3;
    pub const TP_CAMPAIGN: u64 = 4;
    pub const TP_POSITIONS: u64 = 5;
    pub const PLACEMENT: u64 = 6;
    pub const NO_FIT: u64 = 7;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed for counter `index` of `stream`.
pub fn child_seed(seed: u64, stream: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the packed triple
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
