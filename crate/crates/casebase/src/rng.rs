//! Seeded random number generation.
//!
//! All randomness in the crate flows through ChaCha8, a counter-based stream
//! generator whose output is bit-identical across platforms. Independent
//! streams (per subject, per fold, per plot) are derived from a root seed
//! with a SplitMix64 mix so that changing one consumer never perturbs
//! another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags for derived seeds, so distinct consumers of the same root
/// seed never share a stream.
pub mod stream {
    pub const SIMULATE: u64 = 0x01;
    pub const SAMPLE: u64 = 0x02;
    pub const POPTIME_JITTER: u64 = 0x03;
    pub const CV_FOLDS: u64 = 0x04;
    pub const MONTE_CARLO: u64 = 0x05;
}

/// SplitMix64 finalizer; good avalanche, cheap, stable.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed for stream `tag`, element `index`.
pub fn derive_seed(root: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(root ^ splitmix64(tag)) ^ index)
}

/// Root generator for a seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for a derived stream.
pub fn stream_rng(root: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, tag, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn deterministic_across_calls() {
        let a: Vec<u64> = (0..8).map(|_| 0u64).collect();
        let mut r1 = rng_from_seed(42);
        let mut r2 = rng_from_seed(42);
        let x: Vec<u64> = a.iter().map(|_| r1.gen()).collect();
        let y: Vec<u64> = a.iter().map(|_| r2.gen()).collect();
        assert_eq!(x, y);
    }

    #[test]
    fn streams_differ() {
        assert_ne!(
            derive_seed(7, stream::SAMPLE, 0),
            derive_seed(7, stream::POPTIME_JITTER, 0)
        );
        assert_ne!(derive_seed(7, stream::SAMPLE, 0), derive_seed(7, stream::SAMPLE, 1));
    }

    #[test]
    fn chacha_stream_is_frozen() {
        // Frozen reference draw; a change here means tables sampled with a
        // given seed would silently change too.
        let mut r = rng_from_seed(12345);
        let first: u64 = r.gen();
        assert_eq!(first, FROZEN_FIRST_DRAW_SEED_12345);
    }

    const FROZEN_FIRST_DRAW_SEED_12345: u64 = 1359602502065542099;
}
