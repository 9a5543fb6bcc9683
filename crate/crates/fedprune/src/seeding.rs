//! Seed derivation for independent deterministic RNG streams.
//!
//! Every stochastic site (data generation, partitioning, parameter init,
//! each client's epoch shuffles) gets its own stream derived from the
//! experiment seed plus a label path, so adding or removing one consumer
//! never shifts the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Labels for top-level seed domains, kept distinct by construction.
pub mod domain {
    pub const DATA: u64 = 1;
    pub const PARTITION: u64 = 2;
    pub const INIT: u64 = 3;
    pub const CLIENT_ROUND: u64 = 4;
}

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` and a path of labels.
///
/// Distinct paths give independent-looking seeds; the same path always
/// gives the same seed.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut state = mix(base);
    for &label in path {
        state = mix(state ^ mix(label));
    }
    state
}

/// The one RNG constructor used across the crate.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
