//! Deterministic random number plumbing.
//!
//! Every stochastic stage (encoding, initialization, dataset synthesis,
//! dropout masks, sample shuffling) derives its stream from a root seed and a
//! fixed set of stream labels, so identical configurations replay bit for
//! bit regardless of execution order elsewhere.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer, used to mix seed components into stream keys.
#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a root seed with stream labels into a single derived seed.
pub fn derive_seed(root: u64, labels: &[u64]) -> u64 {
    let mut state = splitmix64(root ^ 0x5bf0_3635_0c31_d6b1);
    for &label in labels {
        state = splitmix64(state ^ splitmix64(label));
    }
    state
}

/// Deterministic stream cipher RNG for a derived seed.
pub fn stream_rng(root: u64, labels: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, labels))
}

/// FNV-1a hash of a byte string, salted with a seed. Used for stable
/// dataset splits on file names. The splitmix finalizer spreads the change
/// from trailing bytes into the high bits, which plain FNV leaves lopsided.
pub fn fnv1a_hash(seed: u64, bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ splitmix64(seed);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derive_seed_is_order_sensitive() {
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
    }

    #[test]
    fn stream_rng_replays_identically() {
        let mut a = stream_rng(42, &[3, 9]);
        let mut b = stream_rng(42, &[3, 9]);
        for _ in 0..32 {
            assert_eq!(a.gen::<u64>(), b.gen::<u64>());
        }
    }

    #[test]
    fn distinct_labels_give_distinct_streams() {
        let mut a = stream_rng(42, &[0]);
        let mut b = stream_rng(42, &[1]);
        let same = (0..16).all(|_| a.gen::<u64>() == b.gen::<u64>());
        assert!(!same);
    }

    #[test]
    fn fnv1a_depends_on_seed_and_content() {
        assert_ne!(fnv1a_hash(1, b"img_000.pgm"), fnv1a_hash(2, b"img_000.pgm"));
        assert_ne!(fnv1a_hash(1, b"img_000.pgm"), fnv1a_hash(1, b"img_001.pgm"));
    }
}
