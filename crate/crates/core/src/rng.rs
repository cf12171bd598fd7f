//! SplitMix64 generator and the seeded sampling helpers built on it.
//!
//! Every randomized step in the crate draws from a `SplitMix64` whose state is
//! derived from the user seed plus the coordinates of the work item (size
//! index, trial index, grid cell, ...). Results therefore never depend on
//! scheduling or thread count.

use std::collections::BTreeSet;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The output finalizer of SplitMix64 (Stafford variant 13).
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Independent stream for the work item `(seed, a, b)`.
    pub fn derive(seed: u64, a: u64, b: u64) -> Self {
        let s = mix64(seed ^ mix64(a.wrapping_add(GOLDEN_GAMMA)));
        Self::new(mix64(s ^ mix64(b.wrapping_add(GOLDEN_GAMMA).wrapping_mul(3))))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, bound)`, unbiased (Lemire's multiply-shift with rejection).
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "below(0)");
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let m = (self.next_u64() as u128) * (bound as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// Standard normal draw (Box-Muller, one value per call).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fisher-Yates shuffle in place.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// `k` distinct indices from `0..n`, returned in ascending order.
    pub fn sample_sorted(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot draw {k} of {n} without replacement");
        if k * 4 >= n {
            // dense draw: partial Fisher-Yates over the full index range
            let mut idx: Vec<usize> = (0..n).collect();
            for i in 0..k {
                let j = i + self.below((n - i) as u64) as usize;
                idx.swap(i, j);
            }
            idx.truncate(k);
            idx.sort_unstable();
            idx
        } else {
            self.floyd(n as u64, k).into_iter().map(|v| v as usize).collect()
        }
    }

    /// Floyd's algorithm: `k` distinct values from `0..n` without materializing the range.
    pub fn floyd(&mut self, n: u64, k: usize) -> Vec<u64> {
        let mut chosen = BTreeSet::new();
        for j in (n - k as u64)..n {
            let t = self.below(j + 1);
            if !chosen.insert(t) {
                chosen.insert(j);
            }
        }
        chosen.into_iter().collect()
    }
}
