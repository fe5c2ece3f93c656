//! Seeded random streams.
//!
//! All randomness comes from ChaCha8 keyed by the run seed, with a separate
//! stream per use (epoch, fold, job), so results do not depend on platform or
//! thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed for an independent job (fold, grid cell) derived from the run seed.
pub fn derive_seed(seed: u64, job: u64) -> u64 {
    use rand::RngCore;
    stream_rng(seed, job.wrapping_add(1 << 32)).next_u64()
}
