//! Seeded random streams.
//!
//! Every subsystem draws from its own ChaCha stream so that, for example,
//! generating an extra map never shifts the noise sequence of an episode.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent consumers of randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subsystem {
    Dynamics = 1,
    MapGen = 2,
    Training = 3,
    Episode = 4,
    Policy = 5,
}

/// A deterministic generator for `subsystem`, seeded from `seed`.
pub fn stream(seed: u64, subsystem: Subsystem) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(subsystem as u64);
    rng
}

/// Derive a child seed, e.g. one per generated map.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
