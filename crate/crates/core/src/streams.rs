//! Counter-based random streams.
//!
//! Every random draw in a chain comes from a generator keyed by
//! `(seed, iteration, tag, index)`, so the value of a draw never depends on
//! the order in which workers reach it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub(crate) enum Tag {
    Block = 1,
    Gamma = 2,
    Sigma2 = 3,
    Delta = 4,
    Delta1 = 5,
    Latent = 6,
    Predict = 7,
    Init = 8,
}

pub(crate) fn stream(seed: u64, iter: u64, tag: Tag, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&iter.to_le_bytes());
    key[16..24].copy_from_slice(&(tag as u64).to_le_bytes());
    key[24..32].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
