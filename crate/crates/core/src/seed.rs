//! Seed derivation.
//!
//! A global seed is split into per-component seeds as
//! `seed XOR fnv1a64(tag)`, so adding a new component tag never perturbs the
//! streams of existing ones. Every RNG in the crate is a `ChaCha8Rng`, whose
//! output stream is stable across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derives a component seed from a parent seed and a tag.
pub fn derive(seed: u64, tag: &str) -> u64 {
    seed ^ fnv1a64(tag.as_bytes())
}

/// Derives a seed from a parent seed, a tag and an index (epoch, scene, tree...).
pub fn derive_indexed(seed: u64, tag: &str, index: u64) -> u64 {
    // Mix the index through a splitmix step so neighbouring indices decorrelate.
    let mut z = derive(seed, tag).wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
