//! Deterministic pseudo-random generation.
//!
//! Shuffle maps and archetype draws must be reproducible cross-language from
//! a recorded seed, so the generator is a fixed, versioned SplitMix64 stream
//! keyed by SHA-256 over the seed material. The version string is written to
//! every run manifest.

use sha2::{Digest, Sha256};

/// Identifier recorded in run manifests for the shuffle/sampling generator.
pub const RNG_VERSION: &str = "sha256-splitmix64/v1";

/// SplitMix64 stream (Steele, Lea & Flood 2014 constants).
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    /// Key a stream from a run seed plus an arbitrary domain string
    /// (item id, run index, ...). First 8 bytes of the SHA-256 digest,
    /// little-endian.
    pub fn keyed(seed: u64, domain: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update(domain.as_bytes());
        let digest = hasher.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        SplitMix64::new(u64::from_le_bytes(bytes))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in `0..bound` via rejection sampling (no modulo bias).
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % bound;
            }
        }
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// Weighted index draw. Weights must be non-negative with a positive sum;
    /// weights are integer per-mille resolution via u64 scaling of f64 input.
    pub fn weighted_index(&mut self, weights: &[f64]) -> usize {
        let scaled: Vec<u64> = weights.iter().map(|w| (w * 1000.0).round() as u64).collect();
        let total: u64 = scaled.iter().sum();
        assert!(total > 0, "weights must have a positive sum");
        let mut draw = self.next_below(total);
        for (i, w) in scaled.iter().enumerate() {
            if draw < *w {
                return i;
            }
            draw -= w;
        }
        unreachable!()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_stream() {
        let mut a = SplitMix64::keyed(42, "item-1");
        let mut b = SplitMix64::keyed(42, "item-1");
        for _ in 0..10 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn different_domains_diverge() {
        let a = SplitMix64::keyed(42, "item-1").next_u64();
        let b = SplitMix64::keyed(42, "item-2").next_u64();
        assert_ne!(a, b);
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut rng = SplitMix64::new(7);
        let mut v = vec![0, 1, 2, 3];
        rng.shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
    }

    #[test]
    fn degenerate_weights_always_pick_the_only_option() {
        let mut rng = SplitMix64::new(1);
        for _ in 0..100 {
            assert_eq!(rng.weighted_index(&[1.0, 0.0, 0.0]), 0);
        }
    }
}
