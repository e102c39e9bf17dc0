//! Keyed per-entity random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for the entity at `path` under `seed`. Distinct paths give
/// unrelated streams, so adding or editing one entity leaves the others'
/// draws unchanged.
pub fn entity_rng(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    for &p in path {
        h = splitmix64(h ^ splitmix64(p));
    }
    ChaCha8Rng::seed_from_u64(h)
}

pub mod tag {
    pub const PERMUTATION: u64 = 1;
    pub const HOUSEHOLD: u64 = 2;
    pub const PERSON: u64 = 3;
    pub const CHURNED: u64 = 4;
    pub const CHURN_PICK: u64 = 5;
    pub const CORRUPT: u64 = 6;
    pub const LOGIT: u64 = 7;
}
