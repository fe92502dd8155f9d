use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// H×W×3 RGB image with samples in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct ImageBuf<T = f64> {
    pixels: Tensor<T>,
}

pub const CHANNELS: usize = 3;

impl<T: Scalar> ImageBuf<T> {
    /// Wraps an H×W×3 tensor, rejecting samples outside [0, 1].
    pub fn from_tensor(pixels: Tensor<T>) -> Result<Self> {
        let shape = pixels.shape();
        if shape.len() != 3 || shape[2] != CHANNELS {
            return Err(Error::InvalidArgument(format!(
                "image tensor must be H×W×3, got {shape:?}"
            )));
        }
        if pixels.data().iter().any(|&v| v < T::zero() || v > T::one()) {
            return Err(Error::InvalidArgument(
                "image samples must lie in [0, 1]".into(),
            ));
        }
        Ok(Self { pixels })
    }

    /// Wraps an H×W×3 tensor, clamping every sample into [0, 1].
    pub fn from_tensor_clamped(pixels: Tensor<T>) -> Result<Self> {
        let clamped = pixels.map(clamp01)?;
        Self::from_tensor(clamped)
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        Self::from_tensor(Tensor::from_vec(&[height, width, CHANNELS], data)?)
    }

    pub fn filled(height: usize, width: usize, rgb: [T; 3]) -> Result<Self> {
        let data = (0..height * width).flat_map(|_| rgb).collect();
        Self::from_vec(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[1]
    }

    /// `(height, width, channels)`.
    pub fn dims(&self) -> [usize; 3] {
        [self.height(), self.width(), CHANNELS]
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.pixels
    }

    pub fn data(&self) -> &[T] {
        self.pixels.data()
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> T {
        self.pixels.data()[(y * self.width() + x) * CHANNELS + c]
    }

    pub fn cast<U: Scalar>(&self) -> ImageBuf<U> {
        ImageBuf {
            pixels: self.pixels.cast(),
        }
    }

    pub fn same_dims(&self, other: &Self) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                op: "image",
                left: self.dims().to_vec(),
                right: other.dims().to_vec(),
            });
        }
        Ok(())
    }
}

pub(crate) fn clamp01<T: Scalar>(v: T) -> T {
    v.max(T::zero()).min(T::one())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range() {
        assert!(ImageBuf::from_vec(1, 1, vec![0.0, 0.5, 1.5]).is_err());
        let img = ImageBuf::from_tensor_clamped(
            Tensor::from_vec(&[1, 1, 3], vec![-0.2, 0.5, 1.5]).unwrap(),
        )
        .unwrap();
        assert_eq!(img.data(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn rejects_wrong_channels() {
        let t = Tensor::from_vec(&[1, 1, 2], vec![0.0, 0.0]).unwrap();
        assert!(ImageBuf::from_tensor(t).is_err());
    }
}
