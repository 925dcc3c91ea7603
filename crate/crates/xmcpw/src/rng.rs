//! Deterministic random number generation for simulation.
//!
//! Two flavors are provided:
//!
//! * [`coordinate_u64`] — a stateless counter-based generator keyed by
//!   `(seed, i, j)` coordinates. Every coordinate gets an independent value,
//!   so results do not depend on iteration order and parallel loops stay
//!   reproducible.
//! * [`SplitMix64`] — a tiny sequential stream for synthetic data generation.
//!
//! Neither is cryptographically secure.

/// SplitMix64 finalizer; full-avalanche mix of one 64-bit word.
#[inline]
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based value for coordinate `(i, j)` under `seed`.
///
/// Chained mixing keeps the three inputs independent: flipping any bit of
/// any argument changes the output with probability ~1/2.
#[inline]
pub fn coordinate_u64(seed: u64, i: u64, j: u64) -> u64 {
    mix64(mix64(mix64(seed) ^ i) ^ j)
}

/// Map 64 random bits to a double in `[0, 1)`.
#[inline]
pub fn unit_f64(bits: u64) -> f64 {
    // 53 high-quality mantissa bits.
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw in `[0, 1)` for coordinate `(i, j)` under `seed`.
#[inline]
pub fn coordinate_unit(seed: u64, i: u64, j: u64) -> f64 {
    unit_f64(coordinate_u64(seed, i, j))
}

/// Sequential SplitMix64 stream.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        unit_f64(self.next_u64())
    }

    /// Uniform in `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Uniform integer in `[0, bound)`. `bound` must be non-zero.
    pub fn below(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        (self.next_u64() % bound as u64) as usize
    }

    /// Sample `k` distinct values from `0..n` in increasing order.
    pub fn distinct_sorted(&mut self, k: usize, n: usize) -> Vec<usize> {
        debug_assert!(k <= n);
        // Partial Fisher-Yates over an index pool.
        let mut pool: Vec<usize> = (0..n).collect();
        for slot in 0..k {
            let j = slot + self.below(n - slot);
            pool.swap(slot, j);
        }
        let mut picked = pool[..k].to_vec();
        picked.sort_unstable();
        picked
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinate_values_are_order_independent() {
        let forward: Vec<u64> = (0..50).map(|i| coordinate_u64(7, i, 3)).collect();
        let backward: Vec<u64> = (0..50).rev().map(|i| coordinate_u64(7, i, 3)).collect();
        let mut backward = backward;
        backward.reverse();
        assert_eq!(forward, backward);
    }

    #[test]
    fn unit_values_live_in_unit_interval() {
        let mut rng = SplitMix64::new(1);
        for _ in 0..10_000 {
            let u = rng.unit();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn coordinate_mean_is_near_half() {
        let n = 100_000u64;
        let sum: f64 = (0..n).map(|i| coordinate_unit(42, i, 9)).sum();
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn distinct_sorted_yields_unique_increasing_indices() {
        let mut rng = SplitMix64::new(3);
        for _ in 0..100 {
            let picked = rng.distinct_sorted(5, 12);
            assert_eq!(picked.len(), 5);
            assert!(picked.windows(2).all(|w| w[0] < w[1]));
            assert!(picked.iter().all(|&i| i < 12));
        }
    }
}
