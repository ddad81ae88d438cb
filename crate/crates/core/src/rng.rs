//! Deterministic random streams.
//!
//! Every random quantity in a simulation is drawn from a ChaCha stream whose
//! seed is derived from the master seed and a path of indices (sweep point,
//! block, link). Streams never depend on scheduling, so results are identical
//! for any thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Sub-stream labels for the independent random sources of one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Message = 1,
    SourceDestFading = 2,
    SourceRelayFading = 3,
    RelayDestFading = 4,
    SourceDestNoise = 5,
    SourceRelayNoise = 6,
    RelayDestNoise = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a master seed and an index path into a 64-bit stream seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &idx| splitmix64(acc ^ splitmix64(idx)))
}

pub fn stream(master: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, path))
}
