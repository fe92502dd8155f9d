//! Seeded, platform-independent randomness.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::{check_shape, Tensor};

/// ChaCha8 stream keyed by a 64-bit seed. Identical seeds give identical
/// streams on every platform.
#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent generator for sub-task `stream`. Parallel workers call this
    /// instead of sharing one generator.
    pub fn split(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    /// One standard normal draw via the Box–Muller transform.
    pub fn standard_normal(&mut self) -> f64 {
        // 1 - u keeps the log argument in (0, 1]. The libm routines give the
        // same bits at every optimization level, unlike the std intrinsics.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * libm::log(u1)).sqrt() * libm::cos(std::f64::consts::TAU * u2)
    }

    pub fn normal<T: Scalar>(&mut self, shape: &[usize]) -> Result<Tensor<T>> {
        let len = check_shape(shape)?;
        let data = (0..len).map(|_| T::of(self.standard_normal())).collect();
        Ok(Tensor::from_parts_unchecked(shape.to_vec(), data))
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<E>(&mut self, items: &mut [E]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Convenience wrapper over [`SeededRng::normal`].
pub fn rng_normal<T: Scalar>(rng: &mut SeededRng, shape: &[usize]) -> Result<Tensor<T>> {
    rng.normal(shape)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reseeding_reproduces_stream() {
        let mut rng = SeededRng::new(42);
        let a: Tensor = rng.normal(&[4]).unwrap();
        let b: Tensor = rng.normal(&[4]).unwrap();
        assert_ne!(a, b);
        let mut again = SeededRng::new(42);
        let a2: Tensor = again.normal(&[4]).unwrap();
        assert_eq!(a, a2);
    }

    #[test]
    fn sample_mean_near_zero() {
        let mut rng = SeededRng::new(7);
        let t: Tensor = rng.normal(&[10_000]).unwrap();
        let mean = t.sum() / 10_000.0;
        assert!(mean.abs() < 0.05, "mean {mean}");
        // Pinned value for this generator and transform.
        assert!((mean - PINNED_SEED7_MEAN).abs() < 1e-12, "mean {mean}");
    }

    const PINNED_SEED7_MEAN: f64 = 0.002327934294156053;

    #[test]
    fn zero_dimension_rejected() {
        let mut rng = SeededRng::new(1);
        assert!(rng.normal::<f64>(&[0]).is_err());
    }

    #[test]
    fn split_streams_differ() {
        let mut a = SeededRng::split(3, 0);
        let mut b = SeededRng::split(3, 1);
        assert_ne!(a.next_u64(), b.next_u64());
    }
}
