//! Seeded pseudo-random source shared by every stochastic step.
//!
//! The generator is xoshiro256++ seeded through SplitMix64 (the reference
//! seeding procedure of the xoshiro authors). All derived draws use fixed,
//! documented transforms so that another implementation can reproduce a
//! fixture from `(algorithm, seed)` alone:
//!
//! * `uniform()`  : `(next_u64 >> 11) * 2^-53`, a value in `[0, 1)`.
//! * `below(n)`   : rejection sampling on `next_u64`, rejecting draws at or
//!   above the largest multiple of `n`, then `draw % n`.
//! * `normal()`   : Box–Muller, cosine branch only, consuming two uniforms
//!   `u1 = 1 - uniform()` and `u2 = uniform()` per sample.
//! * `shuffle()`  : Fisher–Yates from the last index down, `j = below(i + 1)`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: Xoshiro256PlusPlus,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { inner: Xoshiro256PlusPlus::seed_from_u64(seed) }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`. Panics when `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let draw = self.next_u64();
            if draw < zone {
                return draw % n;
            }
        }
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
