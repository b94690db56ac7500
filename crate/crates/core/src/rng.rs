//! Seeded pseudo-random source shared by every stochastic routine in the crate.
//!
//! The generator is xoshiro256** (Blackman & Vigna), seeded from a single `u64`
//! through SplitMix64 (increment `0x9E3779B97F4A7C15`, mix constants
//! `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB`). On top of the raw stream:
//!
//! * `next_f64` maps `u64 >> 11` onto `[0, 1)` with a `2^-53` step;
//! * `below(n)` is Lemire's multiply-shift with rejection, so it is exactly uniform;
//! * `shuffle` is a descending Fisher-Yates (`i = n-1 .. 1`, `j = below(i + 1)`);
//! * `gaussian` is the Box-Muller transform, caching the second variate.
//!
//! Any implementation reproducing these few rules reproduces our splits,
//! initial weights and synthetic signals bit for bit.

use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

/// Deterministic random stream.
#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: Xoshiro256StarStar,
    spare_gaussian: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256StarStar::seed_from_u64(seed),
            spare_gaussian: None,
        }
    }

    /// Independent stream derived from `seed` and a stream tag.
    pub fn derived(seed: u64, stream: u64) -> Self {
        Self::new(seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let mut m = (self.next_u64() as u128) * (n as u128);
        let mut low = m as u64;
        if low < n {
            let threshold = n.wrapping_neg() % n;
            while low < threshold {
                m = (self.next_u64() as u128) * (n as u128);
                low = m as u64;
            }
        }
        (m >> 64) as u64
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// Standard normal variate.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare_gaussian.take() {
            return z;
        }
        // 1 - u keeps the log argument in (0, 1].
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_gaussian = Some(r * theta.sin());
        r * theta.cos()
    }
}
