//! Deterministic derivation of independent RNG streams from one base seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `stream` at coordinates `parts`, independent of thread scheduling.
pub fn derive_seed(base: u64, stream: u64, parts: &[u64]) -> u64 {
    let mut h = splitmix64(base ^ splitmix64(stream));
    for &p in parts {
        h = splitmix64(h ^ p);
    }
    h
}

pub fn rng_for(base: u64, stream: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, stream, parts))
}

pub mod streams {
    pub const SHUFFLE: u64 = 1;
    pub const AUGMENT: u64 = 2;
    pub const DROPOUT: u64 = 3;
    pub const INIT: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const SYNTH: u64 = 6;
    pub const ENHANCE: u64 = 7;
}
