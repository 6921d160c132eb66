//! Counter-based seeding: every random stream is addressed by
//! `(seed, index, stream)` so generation order never matters.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids used across the crate.
pub mod stream {
    pub const PHANTOM_LAYOUT: u64 = 1;
    pub const PHANTOM_TEXTURE: u64 = 2;
    pub const PHANTOM_NOISE: u64 = 3;
    pub const INIT: u64 = 10;
    pub const EPOCH_ORDER: u64 = 11;
    pub const PATCH: u64 = 12;
    pub const DROPOUT: u64 = 13;
    pub const SPLIT: u64 = 14;
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_for(seed: u64, index: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let words = [
        mix64(seed),
        mix64(seed ^ mix64(index)),
        mix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)),
        mix64(seed.rotate_left(17) ^ index),
    ];
    for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Stable 64-bit hash of a string under a seed (FNV-1a, then mixed).
pub fn hash_str(seed: u64, s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ mix64(seed);
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    mix64(h)
}
