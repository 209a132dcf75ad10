//! Deterministic seed derivation: master seed, then trial, then link.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator type used for every random draw in the crate.
pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed of `parent` along `path`. Distinct paths give unrelated seeds.
pub fn derive_seed(parent: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(parent), |acc, &p| splitmix64(acc ^ splitmix64(p.wrapping_add(0x632b_e59b_d9b4_e019))))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Seed of trial `trial` under `master`.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    derive_seed(master, &[0x7472_6961_6c, trial as u64])
}
