//! Seeded random streams.
//!
//! Every run derives independent ChaCha8 streams from one user seed, one per
//! consumer, so that adding draws to one consumer never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named stream identifiers. The numeric values are part of the
/// reproducibility contract and must not be renumbered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Weights = 1,
    Search = 2,
    Environment = 3,
    Repertoire = 4,
    Kohonen = 5,
    Dataset = 6,
}

pub type Rng = ChaCha8Rng;

pub fn stream(seed: u64, which: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Derive a child seed, e.g. for the i-th repeat of an experiment.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
