//! Sub-seed derivation.
//!
//! Every stochastic stage draws from its own stream derived from the master
//! seed, so stages can be reproduced independently of each other.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Fixed stream offsets for each stage of a run.
pub mod stream {
    pub const SPLIT: u64 = 0x01;
    pub const REGIME: u64 = 0x02;
    pub const INIT: u64 = 0x03;
    pub const EPOCH: u64 = 0x04;
    pub const WEAK: u64 = 0x05;
    pub const SELECT: u64 = 0x06;
    pub const MOCK: u64 = 0x07;
    pub const SYNTHETIC: u64 = 0x08;
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of `stream` from `master`.
pub fn derive(master: u64, stream: u64) -> u64 {
    mix64(master ^ mix64(stream.wrapping_mul(0xD6E8_FEB8_6659_FD93)))
}

/// Derives a seed from a master seed and a path of indices, e.g.
/// `(EPOCH, epoch, example_id)`.
pub fn derive_path(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(master, |acc, &p| derive(acc, p))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
