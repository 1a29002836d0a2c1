//! Deterministic seed derivation.
//!
//! Every random stream in the crate is seeded from a master seed and a short
//! path of integers (stream tag, scale index, replicate index, ...). The
//! derived seed depends only on that path, so results never depend on how
//! work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep independent consumers of one master seed apart.
pub mod stream {
    pub const RESAMPLE: u64 = 0x5245_5341;
    pub const ICA: u64 = 0x4943_4121;
    pub const DATASET: u64 = 0x4441_5441;
    pub const BOOTSTRAP: u64 = 0x424f_4f54;
    pub const RESTART: u64 = 0x5253_5452;
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `path` into `master` one component at a time.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix64(master), |acc, &p| {
        mix64(acc ^ mix64(p.wrapping_add(0x9e37_79b9_7f4a_7c15)))
    })
}

pub fn rng_for(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}
