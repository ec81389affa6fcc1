//! Seeded random streams.
//!
//! Every random draw in the crate comes from ChaCha8 (via `rand_chacha`), which is
//! specified bit-for-bit and therefore reproduces across platforms. A run seed is
//! split into independent streams by ChaCha's 64-bit stream selector, with the
//! stream id derived from a tuple of labels (experiment, round, stratum, ...).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream id for a tuple of labels.
pub fn stream_id(labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(0x5354_5241_5447_5244, |acc, &l| mix(acc ^ mix(l)))
}

/// A generator for `seed` on the stream identified by `labels`.
pub fn stream(seed: u64, labels: &[u64]) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(labels));
    rng
}

/// Stream tags, so call sites do not collide by accident.
pub mod tag {
    pub const UNIFORM_ROUNDS: u64 = 1;
    pub const NORMAL_ROUNDS: u64 = 2;
    pub const NORMAL_PARAMS: u64 = 3;
    pub const DRAW_STRATIFIED: u64 = 4;
    pub const TRACE: u64 = 5;
    pub const INIT_PARAMS: u64 = 6;
    pub const SUBSAMPLE: u64 = 7;
    pub const TRAINER: u64 = 8;
    pub const VARIANCE_ORACLE: u64 = 9;
}
