//! Counter-based random streams.
//!
//! Every consumer (a trial, a ray, a sample) gets its own ChaCha stream keyed
//! by `(master seed, domain, index)`. The stream depends only on that key, so
//! results do not depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RngStream = ChaCha8Rng;

/// Domain tags keep streams of different experiments apart under one seed.
pub mod domain {
    pub const WALK: u64 = 1;
    pub const RAY: u64 = 2;
    pub const MARTINGALE: u64 = 3;
    pub const HARMONIC: u64 = 4;
    pub const DEFECT: u64 = 5;
    pub const LIL: u64 = 6;
    pub const BOUNDARY: u64 = 7;
    pub const RN_KERNEL: u64 = 8;
    pub const SANDWICH: u64 = 9;
    pub const STATIONARITY: u64 = 10;
}

/// The stream for one `(seed, domain, index)` key.
pub fn stream(seed: u64, domain: u64, index: u64) -> RngStream {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Derives a sub-seed, for nesting keyed streams (e.g. one realization of a
/// randomized function per sample).
pub fn subseed(seed: u64, domain: u64, index: u64) -> u64 {
    use rand::RngCore;
    stream(seed, domain ^ 0x5eed_0000_0000, index).next_u64()
}
