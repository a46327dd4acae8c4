//! Reproducible random streams.
//!
//! Every stochastic step draws from a stream keyed by `(seed, purpose,
//! round, pixel)`, so results do not depend on how work is split across
//! threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags keep streams of different stages apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Simulate = 1,
    AuxDepth = 2,
    FinalDepth = 3,
    KMeans = 4,
}

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for one `(seed, purpose, round, index)` stream.
pub fn stream(seed: u64, purpose: Stream, round: u64, index: u64) -> ChaCha8Rng {
    let mut h = splitmix(seed);
    h = splitmix(h ^ purpose as u64);
    h = splitmix(h ^ round);
    h = splitmix(h ^ index);
    ChaCha8Rng::seed_from_u64(h)
}
