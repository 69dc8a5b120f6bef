//! Deterministic random number plumbing shared by the simulation paths.
//!
//! Every stochastic element (ADC noise, jitter, additive noise, boundary
//! coin flips) draws from a [`SimRng`] created from an explicit seed, so
//! any run is reproducible from its configuration alone.

use rand::SeedableRng;

/// The PRNG used throughout the simulation paths.
pub type SimRng = rand_chacha::ChaCha8Rng;

/// Creates a generator from a bare seed value.
pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a base seed and two indices.
///
/// Used wherever one configured seed has to fan out into many
/// statistically independent streams (per channel, per eye-scan grid
/// point) without the streams being correlated or order-dependent.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ a) ^ b)
}
