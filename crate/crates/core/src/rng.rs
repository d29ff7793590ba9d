//! Portable deterministic random numbers.
//!
//! The generator is xoshiro256++ seeded through SplitMix64 (as in
//! `rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64`). Floats are derived
//! explicitly so that any implementation of the same two published
//! algorithms reproduces the same streams:
//!
//! * `uniform()` = `(next_u64() >> 11) * 2^-53`, in `[0, 1)`
//! * `below(n)`  = rejection sampling on `next_u64()` below the largest
//!   multiple of `n`, then `% n`

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

#[derive(Clone, Debug)]
pub struct DetRng {
    inner: Xoshiro256PlusPlus,
}

impl DetRng {
    pub fn new(seed: u64) -> Self {
        DetRng { inner: Xoshiro256PlusPlus::seed_from_u64(seed) }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Fisher-Yates shuffle driven by [`DetRng::below`].
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// Derives an independent stream, e.g. one per sample or per layer.
    pub fn fork(&mut self) -> DetRng {
        DetRng::new(self.next_u64())
    }
}
