//! Seeded random streams.
//!
//! Every stream is a xoshiro256++ generator whose 256-bit state is filled from
//! a splitmix64 sequence started at the stream seed. Independent streams for
//! different purposes are derived with [`derive_seed`], which mixes the parent
//! seed and a tag through two rounds of the splitmix64 finalizer.

use rand_core::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

/// Purpose tags used across the crate when deriving sub-streams.
pub mod tags {
    pub const INIT: u64 = 0x1001;
    pub const PRETRAIN: u64 = 0x1002;
    pub const ODE: u64 = 0x2001;
    pub const SDE: u64 = 0x2002;
    pub const FINETUNE: u64 = 0x3001;
    pub const EXPAND: u64 = 0x3002;
    pub const PROJECT: u64 = 0x3003;
    pub const METRICS: u64 = 0x4001;
    pub const JITTER: u64 = 0x4002;
    pub const DATA: u64 = 0x5001;
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix_finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the sub-stream `(seed, tag)`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let a = splitmix_finalize(seed.wrapping_add(GOLDEN));
    splitmix_finalize(a ^ tag.wrapping_mul(GOLDEN).rotate_left(17) ^ 0x5851_F42D_4C95_7F2D)
}

#[derive(Debug, Clone)]
pub struct Rng(Xoshiro256PlusPlus);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(Xoshiro256PlusPlus::seed_from_u64(seed))
    }

    /// Independent stream for `(seed, tag)`.
    pub fn stream(seed: u64, tag: u64) -> Self {
        Rng::new(derive_seed(seed, tag))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform on [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.0)
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.normal();
        }
    }

    /// Uniform index in `0..n`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        // Lemire's multiply-shift; bias is < n / 2^64 and irrelevant at our sizes.
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
