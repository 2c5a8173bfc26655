//! Seed derivation and the project-wide RNG.
//!
//! Every stochastic component takes an explicit `u64` seed and builds its own
//! [`ChaCha8Rng`]. Sub-seeds are derived, never shared, so that independent
//! stages (data generation, training shuffles, MCMC chains, evaluation) stay
//! decoupled: changing the number of draws in one stage does not shift the
//! stream of another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mixes a base seed with a stage tag into a fresh seed.
///
/// Uses the splitmix64 finalizer, which maps distinct (base, tag) pairs to
/// well-spread outputs even when both inputs are small integers.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(tag)
        .wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The RNG used throughout the crate.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
