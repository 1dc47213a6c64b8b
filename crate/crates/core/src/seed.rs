//! Deterministic seed derivation.
//!
//! Every random stream in a run (per-layer slope sampling, task permutations,
//! epoch shuffles, replay eviction) is keyed by the run seed plus a short path
//! of integers, so results never depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a base seed with a path of stream identifiers.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix(seed), |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn rng(seed: u64, path: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, path))
}

/// Stream tags, so distinct consumers of the same seed never collide.
pub mod tag {
    pub const INIT: u64 = 1;
    pub const ACTIVATION: u64 = 2;
    pub const PERMUTATION: u64 = 3;
    pub const LABELS: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const SUBSET: u64 = 6;
    pub const CLASSES: u64 = 7;
    pub const REPLAY: u64 = 8;
    pub const PROBE: u64 = 9;
    pub const DATA: u64 = 10;
    pub const CURVATURE: u64 = 11;
    pub const BOOTSTRAP: u64 = 12;
}
