//! Seed splitting.
//!
//! Every random stream in a run is derived from the master seed through
//! [`derive`], which mixes the parent seed, a stream label and an index with
//! SplitMix64. A stream therefore depends only on its path from the master
//! seed, never on how many other streams were drawn before it, so results are
//! identical at any level of parallelism.
//!
//! The label hash is FNV-1a over the label bytes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used for every stochastic component.
pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn label_hash(label: &str) -> u64 {
    label
        .bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Child seed for stream `label`, element `index`, of `parent`.
pub fn derive(parent: u64, label: &str, index: u64) -> u64 {
    splitmix64(splitmix64(parent ^ label_hash(label)) ^ splitmix64(index.wrapping_add(1)))
}

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Shorthand for `rng(derive(parent, label, index))`.
pub fn stream(parent: u64, label: &str, index: u64) -> Rng {
    rng(derive(parent, label, index))
}
