//! Seeded random streams.
//!
//! Every stochastic component draws from ChaCha8 (`rand_chacha::ChaCha8Rng`),
//! whose output is fixed by the algorithm and identical on every platform.
//! A user seed is expanded with `seed_from_u64` and each consumer selects its
//! own ChaCha stream id, so the circuit generator, parameter initialiser and
//! dataset never share random numbers even when given the same seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent consumers of a seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Circuit = 1,
    Params = 2,
    Dataset = 3,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
