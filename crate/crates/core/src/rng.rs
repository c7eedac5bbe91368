//! Seeded, stateless random streams.
//!
//! Every random draw in a session is derived from `(session seed, purpose, a, b)`
//! so the same draw can be recomputed during replay without carrying RNG state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub(crate) enum Stream {
    Partition = 1,
    Topology = 2,
    ObserverInterval = 3,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub(crate) fn stream(seed: u64, purpose: Stream, a: u64, b: u64) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ purpose as u64);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    ChaCha8Rng::seed_from_u64(h)
}
