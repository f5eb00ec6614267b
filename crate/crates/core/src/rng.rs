//! Portable seeded randomness.
//!
//! Every random draw in the crate goes through [`PortableRng`], a thin layer
//! over ChaCha8 (the `rand_chacha` stream, seeded via `seed_from_u64`). The
//! derived draws (uniform floats, bounded integers, normals, sampling without
//! replacement) are written out here rather than borrowed from `rand`'s
//! distribution machinery, so golden values depend only on the ChaCha8
//! keystream and a few lines of arithmetic that are easy to port.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Debug, Clone)]
pub struct PortableRng {
    inner: ChaCha8Rng,
}

impl PortableRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, bound)` by rejection sampling. `bound` must be nonzero.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "bound must be positive");
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % bound;
            }
        }
    }

    /// Standard normal draw (Box-Muller, cosine branch only).
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// `k` distinct indices from `0..n`, uniformly without replacement, in draw order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot sample {k} of {n}");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = PortableRng::new(42);
        let mut b = PortableRng::new(42);
        for _ in 0..16 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn keystream_is_pinned() {
        // Regression values for ChaCha8 seeded with seed_from_u64(0).
        let mut rng = PortableRng::new(0);
        let got: Vec<u64> = (0..3).map(|_| rng.next_u64()).collect();
        assert_eq!(got, KEYSTREAM_SEED0);
    }

    const KEYSTREAM_SEED0: [u64; 3] = [
        13080132717333068652,
        8594738769458413623,
        12896916468484187878,
    ];

    #[test]
    fn unit_interval() {
        let mut rng = PortableRng::new(3);
        for _ in 0..1000 {
            let x = rng.next_f64();
            assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn below_stays_in_range() {
        let mut rng = PortableRng::new(5);
        for bound in 1..50u64 {
            assert!(rng.below(bound) < bound);
        }
    }

    #[test]
    fn sample_indices_distinct() {
        let mut rng = PortableRng::new(9);
        let mut s = rng.sample_indices(100, 32);
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 32);
        assert!(s.iter().all(|&i| i < 100));
    }

    #[test]
    fn normal_moments_are_plausible() {
        let mut rng = PortableRng::new(11);
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }
}
