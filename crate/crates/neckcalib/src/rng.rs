//! Deterministic parallel randomness.
//!
//! Every sampled object is produced from a generator derived from
//! `(master seed, sample index)` through ChaCha's counter-addressed
//! streams, so a sweep partitioned over any number of workers replays
//! bit-identically.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for the given sample index under a master seed.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
