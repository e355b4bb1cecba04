//! Derivation of independent RNG streams from a run seed.
//!
//! Every consumer of randomness (environment episodes, weight init, action
//! sampling, batch sampling, the bandit, PBT) gets its own stream keyed by a
//! tag and optional indices, so adding or removing one consumer never shifts
//! the draws seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used throughout the crate. ChaCha output is portable across
/// platforms and library versions, which bit-exact replays rely on.
pub type StreamRng = ChaCha8Rng;

pub mod tag {
    pub const TRAIN_ENV: u64 = 0x7472_6169_6e00;
    pub const EVAL_ENV: u64 = 0x6576_616c_0000;
    pub const STALE_EVAL_ENV: u64 = 0x7374_616c_6500;
    pub const WEIGHT_INIT: u64 = 0x696e_6974_0000;
    pub const ACT: u64 = 0x6163_7400_0000;
    pub const BATCH: u64 = 0x6261_7463_6800;
    pub const BANDIT: u64 = 0x6261_6e64_6974;
    pub const PBT: u64 = 0x7062_7400_0000;
    pub const POOL: u64 = 0x706f_6f6c_0000;
    pub const EPISODE: u64 = 0x6570_6973_6f64;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `parts` into `base` with a non-commutative mix.
pub fn derive(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(splitmix64(acc) ^ p))
}

pub fn stream(base: u64, parts: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive(base, parts))
}
