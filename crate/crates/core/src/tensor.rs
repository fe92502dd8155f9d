//! Dense row-major tensors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major n-dimensional array.
///
/// `shape.iter().product() == data.len()` always holds, and every public
/// constructor rejects non-finite input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct Tensor<T = f64> {
    shape: Vec<usize>,
    data: Vec<T>,
}

pub(crate) fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::RankZero);
    }
    if shape.contains(&0) {
        return Err(Error::InvalidShape(shape.to_vec()));
    }
    Ok(shape.iter().product())
}

impl<T: Scalar> Tensor<T> {
    pub fn filled(shape: &[usize], value: T) -> Result<Self> {
        let len = check_shape(shape)?;
        if !value.is_finite() {
            return Err(Error::NonFinite("tensor_filled"));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::filled(shape, T::zero())
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != data.len() {
            return Err(Error::LengthMismatch {
                shape: shape.to_vec(),
                len: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor_from_vec"));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Builds without validation. Callers guarantee shape/length agreement
    /// and finiteness.
    pub(crate) fn from_parts_unchecked(shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    /// Elementwise map. Fails if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        let data: Vec<T> = self.data.iter().map(|&v| f(v)).collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor_map"));
        }
        Ok(Self::from_parts_unchecked(self.shape.clone(), data))
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::DimensionMismatch {
                op: "zip_with",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let data: Vec<T> = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor_zip_with"));
        }
        Ok(Self::from_parts_unchecked(self.shape.clone(), data))
    }

    /// Sum in index order.
    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }

    pub fn l2_norm(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, &v| acc + v * v)
            .sqrt()
    }

    /// Converts element type, e.g. `f32` to `f64`.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::of(v.to_f64_lossy())).collect(),
        }
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        matmul(self, rhs)
    }
}

/// Rank-2 matrix product with row-major accumulation order.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let mismatch = || Error::DimensionMismatch {
        op: "matmul",
        left: a.shape.clone(),
        right: b.shape.clone(),
    };
    if a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0] {
        return Err(mismatch());
    }
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a.data[i * k + p];
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o = *o + aip * bv;
            }
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matmul"));
    }
    Ok(Tensor::from_parts_unchecked(vec![m, n], out))
}

/// Index of the largest element; ties go to the lowest index.
pub fn argmax<T: Scalar>(t: &[T]) -> Result<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &v) in t.iter().enumerate() {
        match best {
            Some((_, bv)) if v <= bv => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i).ok_or(Error::Empty("argmax"))
}
