//! Deterministic seed derivation.
//!
//! Every random quantity in the crate is drawn from a ChaCha stream whose
//! key is derived from a master seed plus a list of context tags (domain,
//! purpose, replication index, ...). Derivation goes through a fixed 64-bit
//! mixer, so streams are independent of the order in which they are
//! consumed and parallel generation stays reproducible.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// SplitMix64 step: advances `state` and returns the next output.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Collapses an ordered list of seed parts into a single 64-bit seed.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut s = 0x243F_6A88_85A3_08D3_u64;
    for &p in parts {
        let mut st = s ^ p;
        s = splitmix64(&mut st);
    }
    s
}

/// A ChaCha generator keyed by the mixed seed parts.
pub fn chacha(parts: &[u64]) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(mix_seed(parts))
}

/// A per-subject stream: same key as [`chacha`], independent stream per index.
pub fn chacha_stream(parts: &[u64], stream: u64) -> ChaCha12Rng {
    let mut rng = chacha(parts);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn mix_is_order_sensitive() {
        assert_ne!(mix_seed(&[1, 2]), mix_seed(&[2, 1]));
        assert_ne!(mix_seed(&[1]), mix_seed(&[1, 0]));
    }

    #[test]
    fn mix_is_deterministic() {
        assert_eq!(mix_seed(&[7, 11, 13]), mix_seed(&[7, 11, 13]));
    }

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let mut a = chacha_stream(&[42, 1], 0);
        let mut b = chacha_stream(&[42, 1], 1);
        let mut a2 = chacha_stream(&[42, 1], 0);
        let xa: Vec<u64> = (0..4).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..4).map(|_| b.next_u64()).collect();
        let xa2: Vec<u64> = (0..4).map(|_| a2.next_u64()).collect();
        assert_eq!(xa, xa2);
        assert_ne!(xa, xb);
    }
}
