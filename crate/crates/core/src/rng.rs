//! Seeded random streams.
//!
//! Every stochastic component draws from a ChaCha stream keyed by
//! `(seed, domain, index)`, so results do not depend on call order across
//! components or on the platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DOMAIN_INIT: u64 = 1;
pub const DOMAIN_SAMPLER: u64 = 2;
pub const DOMAIN_DROPOUT: u64 = 3;
pub const DOMAIN_SPLIT: u64 = 4;
pub const DOMAIN_KMEANS: u64 = 5;
pub const DOMAIN_FEWSHOT: u64 = 6;
pub const DOMAIN_SYNTHETIC: u64 = 7;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(domain)));
    rng.set_stream(index);
    rng
}
