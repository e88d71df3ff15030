//! Reproducible random number streams.
//!
//! Every random draw in the toolkit is tied to a logical location
//! (replication, particle, edge, step, ...) rather than to iteration
//! order. Substreams are derived by hashing the master seed together
//! with a domain tag and a few index words, so results do not depend
//! on scheduling or worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain separation tags for substream derivation.
pub mod tag {
    pub const REPLICATION: u64 = 0x5245_504c_4943_4154;
    pub const EDGE_INIT: u64 = 0x4544_4745_494e_4954;
    pub const EDGE_STEP: u64 = 0x4544_4745_5354_4550;
    pub const INITIAL_STATE: u64 = 0x494e_4954_5354_4154;
    pub const BROWNIAN: u64 = 0x4252_4f57_4e49_414e;
    pub const ORACLE: u64 = 0x4f52_4143_4c45_5f5f;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes the master seed with index words into a single 64-bit value.
#[inline]
pub fn mix(master: u64, words: &[u64]) -> u64 {
    let mut state = splitmix64(master ^ 0x6a09_e667_f3bc_c908);
    for &w in words {
        state = splitmix64(state ^ splitmix64(w));
    }
    state
}

/// A ChaCha8 stream keyed by (master seed, index words). Independent of
/// the order in which other streams are consumed.
pub fn substream(master: u64, words: &[u64]) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    let mut s = mix(master, words);
    for chunk in seed.chunks_exact_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// One-shot uniform in [0,1) keyed by location; used for per-edge
/// counter-based draws where allocating a full stream would dominate.
#[inline]
pub fn uniform_at(master: u64, words: &[u64]) -> f64 {
    // 53 random bits into the mantissa.
    (mix(master, words) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
