//! Seed derivation.
//!
//! Every random stream in the crate is keyed by the master seed plus a short
//! path of integer tags (stage, window, tree, resample, ...). Streams never
//! depend on iteration order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `tags` into `seed`. Distinct tag paths give statistically independent seeds.
pub fn derive(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix(seed), |acc, &t| splitmix(acc ^ splitmix(t.wrapping_add(GOLDEN))))
}

pub fn rng(seed: u64, tags: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, tags))
}

/// Stage tags used throughout the pipeline.
pub mod stage {
    pub const CLINIC: u64 = 1;
    pub const PATIENT: u64 = 2;
    pub const STRUCTURE: u64 = 3;
    pub const FOREST: u64 = 10;
    pub const EXPOST: u64 = 20;
    pub const EXANTE: u64 = 21;
    pub const BOOTSTRAP: u64 = 30;
    pub const SWEEP: u64 = 31;
    pub const IMPORTANCE: u64 = 40;
}
