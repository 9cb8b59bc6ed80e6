//! Seed derivation and keyed random streams.
//!
//! Every random quantity in the pipeline is drawn from a ChaCha stream whose
//! key is derived from a base seed and a fixed list of integer labels, so a
//! value depends only on *what* it is (trial, block, restart) and never on
//! the order in which workers happen to request it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Domain labels mixed into derived seeds.
pub mod tag {
    pub const PLACEMENT: u64 = 0x504c_4143;
    pub const GROUP: u64 = 0x4752_4f55;
    pub const NOISE: u64 = 0x4e4f_4953;
    pub const MRA: u64 = 0x4d52_4121;
    pub const EMBED: u64 = 0x454d_4244;
    pub const RESTART: u64 = 0x5253_5452;
    pub const SIGNAL: u64 = 0x5349_474e;
    pub const TRIAL: u64 = 0x5452_4941;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash a base seed together with a list of labels.
pub fn derive_seed(base: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix64(base), |acc, &l| splitmix64(acc ^ splitmix64(l)))
}

/// A generator keyed on `(seed, labels)`.
pub fn keyed_rng(seed: u64, labels: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, labels))
}

/// Stream `stream` of the generator keyed on `seed`. Distinct streams are
/// independent, which is what makes block-wise noise order-independent.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
