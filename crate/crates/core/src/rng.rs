//! Seeded random streams.
//!
//! Every stochastic consumer draws from its own ChaCha stream derived from a
//! single user seed. Streams are addressed by a fixed id, so adding a new
//! consumer never shifts the numbers seen by an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    WeightInit = 1,
    BatchSampling = 2,
    InputNoise = 3,
    Dirichlet = 4,
    Split = 5,
    WhitePerturbation = 6,
    TestFixtures = 99,
}

pub fn stream(seed: u64, which: Stream) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
