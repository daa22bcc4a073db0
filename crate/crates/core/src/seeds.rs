//! Independent, reproducible random streams derived from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 64-bit FNV-1a; fixed forever so seed streams stay stable across releases.
const fn fnv1a(tag: &str) -> u64 {
    let bytes = tag.as_bytes();
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut i = 0;
    while i < bytes.len() {
        hash ^= bytes[i] as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        i += 1;
    }
    hash
}

/// Per-component seed: the master seed XOR a hash of the component tag.
pub fn stream_seed(master: u64, tag: &str) -> u64 {
    master ^ fnv1a(tag)
}

pub fn stream(master: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(master, tag))
}
