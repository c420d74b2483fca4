//! Seeded random streams.
//!
//! Every random draw in the crate comes from ChaCha8 (`rand_chacha`), seeded
//! with `seed_from_u64(seed)` and split into independent streams with
//! `set_stream`. ChaCha is a counter-based generator, so a (seed, stream)
//! pair names one reproducible sequence regardless of thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream ids reserved for the different consumers of a master seed.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const BATCHES: u64 = 2;
    pub const ORTHOGONAL: u64 = 3;
    pub const GENERATOR: u64 = 4;
    pub const KMEANS: u64 = 5;
    pub const TEST: u64 = 99;
}

/// Returns the generator for `stream` under the master `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
