//! Seeded random streams. Every stochastic component takes an explicit
//! generator derived from the run seed and a stream label so that runs are
//! reproducible and independent components do not share draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Generator for `(seed, stream)`; distinct streams are statistically
/// independent.
pub fn stream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream labels used across the crate.
pub mod streams {
    pub const TRACES: u64 = 1;
    pub const HEIGHTS: u64 = 2;
    pub const RESERVOIR: u64 = 3;
    pub const ESN_INIT: u64 = 4;
    pub const UL_NET: u64 = 5;
    pub const DL_NET: u64 = 6;
    pub const PRETRAIN_TRACES: u64 = 7;
    pub const PRETRAIN_CHANNEL: u64 = 8;
    pub const EVAL_CHANNEL: u64 = 9;
    pub const EXPLORE: u64 = 10;
    pub const REPLAY: u64 = 11;
    pub const RECOVERY: u64 = 12;
    pub const INIT_POWER: u64 = 13;
    pub const DL_EXPLORE: u64 = 14;
    pub const DL_REPLAY: u64 = 15;
    pub const EVAL_INIT_POWER: u64 = 16;
}
