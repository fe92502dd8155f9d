use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::engine::AttributionMap;

/// Sign-split view of an attribution map after max-abs normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct PolarityMaps<T = f64> {
    /// Values in [−1, 0].
    pub negative: Tensor<T>,
    /// Values in [0, 1].
    pub positive: Tensor<T>,
    /// The max |IG_i| divisor (1 for an all-zero map).
    pub normalizer: T,
}

/// Scales by `1 / max|IG_i|`, then clips into [−1, 0] and [0, 1].
pub fn split_polarity<T: Scalar>(att: &AttributionMap<T>) -> Result<PolarityMaps<T>> {
    split_values(&att.values)
}

pub fn split_values<T: Scalar>(values: &Tensor<T>) -> Result<PolarityMaps<T>> {
    let max = values.max_abs();
    let normalizer = if max > T::zero() { max } else { T::one() };
    let scaled = values.map(|v| v / normalizer)?;
    let one = T::one();
    Ok(PolarityMaps {
        negative: scaled.map(|v| v.max(-one).min(T::zero()))?,
        positive: scaled.map(|v| v.max(T::zero()).min(one))?,
        normalizer,
    })
}

/// Per-pixel maps (H×W×1) from the channel sums of an H×W×C attribution.
pub fn split_pixels<T: Scalar>(values: &Tensor<T>) -> Result<PolarityMaps<T>> {
    let shape = values.shape();
    if shape.len() != 3 {
        return Err(Error::InvalidShape(shape.to_vec()));
    }
    let (h, w, c) = (shape[0], shape[1], shape[2]);
    let sums: Vec<T> = values
        .data()
        .chunks(c)
        .map(|px| px.iter().fold(T::zero(), |a, &v| a + v))
        .collect();
    split_values(&Tensor::from_vec(&[h, w, 1], sums)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn all_zero() {
        let p = split_values(&Tensor::<f64>::zeros(&[2, 2, 3]).unwrap()).unwrap();
        assert!(p.negative.data().iter().all(|&v| v == 0.0));
        assert!(p.positive.data().iter().all(|&v| v == 0.0));
        assert_eq!(p.normalizer, 1.0);
    }

    #[test]
    fn pixel_sums() {
        let v = Tensor::from_vec(&[1, 2, 3], vec![1.0, 1.0, -4.0, 0.5, 0.5, 0.0]).unwrap();
        let p = split_pixels(&v).unwrap();
        assert_eq!(p.negative.shape(), &[1, 2, 1]);
        assert_eq!(p.negative.data(), &[-1.0, 0.0]);
        assert_eq!(p.positive.data(), &[0.0, 0.5]);
        assert_eq!(p.normalizer, 2.0);
    }

    #[test]
    fn two_values() {
        let p = split_values(&Tensor::from_vec(&[2], vec![-2.0, 1.0]).unwrap()).unwrap();
        assert_eq!(p.negative.data(), &[-1.0, 0.0]);
        assert_eq!(p.positive.data(), &[0.0, 0.5]);
    }

    #[test]
    fn single_positive_pixel() {
        let mut v = vec![0.0; 12];
        v[11] = 3.0;
        let p = split_values(&Tensor::from_vec(&[2, 2, 3], v).unwrap()).unwrap();
        assert_eq!(p.positive.data().iter().filter(|&&x| x == 1.0).count(), 1);
        assert_eq!(p.positive.data()[11], 1.0);
    }

    proptest! {
        #[test]
        fn bounds_and_reconstruction(values in prop::collection::vec(-1e3f64..1e3, 1..64)) {
            let t = Tensor::from_vec(&[values.len()], values.clone()).unwrap();
            let p = split_values(&t).unwrap();
            for (i, &v) in values.iter().enumerate() {
                let (n, q) = (p.negative.data()[i], p.positive.data()[i]);
                prop_assert!((-1.0..=0.0).contains(&n));
                prop_assert!((0.0..=1.0).contains(&q));
                let scaled = n + q;
                if scaled.abs() < 1.0 {
                    prop_assert!((scaled * p.normalizer - v).abs() <= 1e-12 * p.normalizer.max(1.0));
                }
            }
        }
    }
}
