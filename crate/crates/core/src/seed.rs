//! Seed derivation. Every random stream in the crate is keyed by a
//! `derive_seed(base, parts)` call so that streams are independent and
//! reproducible without sharing generator state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TAG_MASK: u64 = 0x6d61_736b;
pub const TAG_SHUFFLE: u64 = 0x7368_7566;
pub const TAG_INIT: u64 = 0x696e_6974;
pub const TAG_TRACK: u64 = 0x7472_6163;
pub const TAG_SAMPLE: u64 = 0x7361_6d70;
pub const TAG_NOISE: u64 = 0x6e6f_6973;
pub const TAG_SPLIT: u64 = 0x7370_6c74;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `parts` into `base` one word at a time.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Dropout mask seed for one layer in one stochastic pass.
pub fn mask_seed(run_seed: u64, layer_index: usize, pass_index: u64) -> u64 {
    derive_seed(run_seed, &[TAG_MASK, layer_index as u64, pass_index])
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
