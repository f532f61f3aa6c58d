//! Independent test oracles and seeded random program generators.
//!
//! Nothing here calls into the compiler path: the oracles are written from
//! the language definitions and only share the s-expression datum type.

pub mod fsa;
pub mod hirgen;
pub mod mhk;
pub mod synth;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seed used when `DSLKIT_SEED` is unset or unparsable.
pub const DEFAULT_SEED: u64 = 0x5eed_d51c;

/// The seed for randomized tests: `DSLKIT_SEED` if set, else [`DEFAULT_SEED`].
pub fn seed() -> u64 {
    std::env::var("DSLKIT_SEED").ok().and_then(|s| s.trim().parse().ok()).unwrap_or(DEFAULT_SEED)
}

/// A generator seeded from [`seed`] mixed with a per-suite salt, so suites
/// draw independent streams.
pub fn rng(salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed() ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}
