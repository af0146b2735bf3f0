//! Seeded random streams.
//!
//! A single master seed fans out into named, independent ChaCha streams so
//! that each component (subsampling, projection, measurement, ...) can be
//! rerun in isolation and still reproduce the same draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream `name` of the master seed.
pub fn stream(master: u64, name: &str) -> SimRng {
    let mut rng = seeded(master);
    rng.set_stream(fnv1a(name.as_bytes()));
    rng
}

/// Stream `name`, sub-index `index` (e.g. one per user or per trial).
pub fn substream(master: u64, name: &str, index: u64) -> SimRng {
    let mut bytes = name.as_bytes().to_vec();
    bytes.push(0);
    bytes.extend_from_slice(&index.to_le_bytes());
    let mut rng = seeded(master);
    rng.set_stream(fnv1a(&bytes));
    rng
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
