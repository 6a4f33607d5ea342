//! Stable seed derivation and keyed randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives an independent 64-bit seed for `(master, stage, stream)`.
///
/// The value is the first eight bytes (little-endian) of
/// `SHA-256(master_le || stage || 0x00 || stream_le)`, so it is stable across
/// releases and platforms.
pub fn derive_seed(master: u64, stage: &str, stream: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(stage.as_bytes());
    hasher.update([0u8]);
    hasher.update(stream.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Seeded generator for one derived stream.
pub fn stream_rng(master: u64, stage: &str, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stage, stream))
}

/// Cheap keyed hash for per-item randomness in hot loops (splitmix64 chain).
pub(crate) fn mix(words: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &w in words {
        h = splitmix(h ^ w);
    }
    h
}

pub(crate) fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Maps a keyed hash to a uniform value in `[0, 1)`.
pub(crate) fn unit(words: &[u64]) -> f64 {
    (mix(words) >> 11) as f64 / (1u64 << 53) as f64
}
