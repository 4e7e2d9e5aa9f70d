//! Deterministic seed derivation.
//!
//! Per-sentence and per-iteration seeds are derived from a run seed and a
//! stable key, so results never depend on iteration or thread order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a base seed with an arbitrary key.
pub fn derive_seed(base: u64, key: &[u8]) -> u64 {
    splitmix64(base ^ splitmix64(fnv1a(key)))
}

pub fn derive_seed_str(base: u64, key: &str) -> u64 {
    derive_seed(base, key.as_bytes())
}

pub fn derive_seed_u64(base: u64, key: u64) -> u64 {
    derive_seed(base, &key.to_le_bytes())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stable 64-bit hash used for feature hashing.
pub(crate) fn hash_words(words: &[u64]) -> u64 {
    let mut h = FNV_OFFSET;
    for w in words {
        for b in w.to_le_bytes() {
            h = (h ^ b as u64).wrapping_mul(FNV_PRIME);
        }
    }
    splitmix64(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable_and_key_sensitive() {
        assert_eq!(derive_seed_str(7, "a1"), derive_seed_str(7, "a1"));
        assert_ne!(derive_seed_str(7, "a1"), derive_seed_str(7, "a2"));
        assert_ne!(derive_seed_str(7, "a1"), derive_seed_str(8, "a1"));
        assert_ne!(derive_seed_u64(1, 2), derive_seed_u64(2, 1));
    }
}
