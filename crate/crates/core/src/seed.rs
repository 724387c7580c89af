//! Deterministic seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator seeded from a
//! 64-bit value. Child seeds are derived by hashing the parent seed together
//! with a textual tag, so results never depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over raw bytes, followed by a splitmix finalizer so that
/// nearby inputs land far apart.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    mix(h)
}

pub(crate) fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for a canonical key string such as `"n=200|p=10|...|rep=3|seed=1"`.
pub fn seed_from_key(key: &str) -> u64 {
    fnv1a(key.as_bytes())
}

/// Child seed of `parent` identified by `tag`.
pub fn derive(parent: u64, tag: &str) -> u64 {
    let mut buf = Vec::with_capacity(8 + tag.len());
    buf.extend_from_slice(&parent.to_le_bytes());
    buf.extend_from_slice(tag.as_bytes());
    fnv1a(&buf)
}

/// Child seed of `parent` identified by an integer index.
pub fn derive_index(parent: u64, tag: &str, index: u64) -> u64 {
    let mut buf = Vec::with_capacity(16 + tag.len());
    buf.extend_from_slice(&parent.to_le_bytes());
    buf.extend_from_slice(tag.as_bytes());
    buf.extend_from_slice(&index.to_le_bytes());
    fnv1a(&buf)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
