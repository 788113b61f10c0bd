//! Seeded randomness with named substreams.
//!
//! Every stochastic component (fold split, parameter init, oversampling,
//! synthetic data) draws from its own ChaCha stream derived from a single
//! root seed and a stream name, so components can be reseeded independently
//! and runs are reproducible end to end.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// FNV-1a, used to turn stream names into stream ids.
fn fnv1a(name: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in name.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// A ChaCha generator keyed by the root seed on the stream named `name`.
pub fn substream(root_seed: u64, name: &str) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(root_seed);
    rng.set_stream(fnv1a(name));
    rng
}

/// Derives a child seed for components that take a plain `u64` seed.
pub fn derive_seed(root_seed: u64, name: &str) -> u64 {
    // splitmix64 finalizer over root xor stream-name hash
    let mut z = root_seed ^ fnv1a(name);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
