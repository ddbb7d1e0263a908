//! Deterministic derivation of per-path random streams.
//!
//! Ensembles assign stream `k` the seed `mix_seed(seed, k)` so that results
//! are reproducible and independent of how paths are scheduled across
//! workers. The mixing function is the SplitMix64 finalizer applied to
//! `seed + (k + 1) * GOLDEN_GAMMA` (all arithmetic mod 2^64), so any
//! implementation language can reproduce the stream assignment.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 2^64 / phi, the Weyl increment used by SplitMix64.
pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output permutation (Steele, Lea & Flood).
pub fn splitmix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-stream seed: `splitmix64(seed + (index + 1) * GOLDEN_GAMMA)`.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Generator consuming a fully derived seed. Ensembles pass
/// `mix_seed(ensemble_seed, path_index)`, so any ensemble path can be
/// replayed as a single path with that derived seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
