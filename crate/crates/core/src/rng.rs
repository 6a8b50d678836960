//! Deterministic random streams.
//!
//! Every consumer derives its generator from a `(seed, stream)` pair so that
//! serial and parallel execution draw identical numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type SimRng = ChaCha8Rng;

/// Generator for `seed`, on stream `stream`.
pub fn stream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[inline]
pub fn standard_normal(rng: &mut SimRng) -> f64 {
    StandardNormal.sample(rng)
}
