//! Seeded random streams.
//!
//! Every consumer of randomness asks for a stream by `(seed, purpose)`, so
//! that changing how many draws one purpose makes never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Independent stream identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Split = 1,
    Bank = 2,
    Positions = 3,
    LogitNoise = 4,
    Labels = 5,
    Init = 6,
    Shuffle = 7,
    Dropout = 8,
    Bootstrap = 9,
    Permutation = 10,
    Cluster = 11,
}

pub fn stream(seed: u64, purpose: Purpose) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}

/// Stream for a purpose that is itself indexed (epoch, replicate, ...).
pub fn sub_stream(seed: u64, purpose: Purpose, index: u64) -> Rng {
    let mixed = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    stream(mixed, purpose)
}
