//! Deterministic seed derivation.
//!
//! Every random draw in an experiment is keyed by a seed derived from the
//! master seed and the coordinates of the work item (SNR index, trial,
//! iteration, ...). Work items can therefore run in any order, on any number
//! of threads, and still see the same random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags used as the first derivation coordinate.
pub mod tag {
    pub const SNAPSHOTS: u64 = 0x534e_4150;
    pub const WEIGHTS: u64 = 0x5747_4854;
    pub const RMSE_TRIAL: u64 = 0x524d_5345;
    pub const HEATMAP_TRIAL: u64 = 0x4845_4154;
    pub const BOOTSTRAP: u64 = 0x424f_4f54;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fold `parts` into `base`, producing a well-mixed child seed.
pub fn derive(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Order-sensitive 64-bit digest of a slice of floats (bit patterns).
pub fn checksum(values: &[f64]) -> u64 {
    values.iter().fold(0x6a09_e667_f3bc_c909, |acc, v| {
        splitmix64(acc ^ v.to_bits())
    })
}
