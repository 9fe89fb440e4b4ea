//! Seeded, splittable random number generation.
//!
//! Backed by ChaCha8, whose output is specified bit-for-bit and therefore
//! identical across platforms. Independent streams are derived with
//! [`Rng::stream`]: the same `(seed, stream)` pair always yields the same
//! sequence, and distinct stream ids never overlap.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::stream(seed, 0)
    }

    /// Stream `id` of the generator family keyed by `seed`.
    pub fn stream(seed: u64, id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(id);
        Self { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn unit_f64(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit_f64()
    }

    /// Uniform in the open interval `(-bound, bound)`.
    pub fn symmetric_open(&mut self, bound: f64) -> f64 {
        loop {
            let v = bound * (2.0 * self.unit_f64() - 1.0);
            if v > -bound {
                return v;
            }
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.unit_f64() < p
    }

    /// Draw from `Normal(mean, sigma^2)`.
    pub fn normal(&mut self, mean: f64, sigma: f64) -> f64 {
        // sigma is validated by callers; Normal::new only fails on non-finite sigma
        Normal::new(mean, sigma)
            .map(|d| d.sample(&mut self.inner))
            .unwrap_or(f64::NAN)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
