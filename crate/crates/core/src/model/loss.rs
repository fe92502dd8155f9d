use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{argmax, Tensor};

/// Per-class scores `f_j(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Logits<T = f64>(pub Vec<T>);

impl<T: Scalar> Logits<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("logits"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Max-shifted softmax.
    pub fn softmax(&self) -> Vec<T> {
        let m = self.0.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let exps: Vec<T> = self.0.iter().map(|&v| (v - m).exp()).collect();
        let z = exps.iter().fold(T::zero(), |a, &b| a + b);
        exps.into_iter().map(|e| e / z).collect()
    }

    pub fn predicted(&self) -> Result<usize> {
        argmax(&self.0)
    }

    pub fn as_tensor(&self) -> Result<Tensor<T>> {
        Tensor::from_vec(&[self.0.len()], self.0.clone())
    }
}

/// Cross-entropy `-log softmax(logits)_k`, stabilized by the max shift.
pub fn loss_ce<T: Scalar>(logits: &Logits<T>, k: usize) -> Result<T> {
    let values = logits.values();
    if k >= values.len() {
        return Err(Error::LabelOutOfRange {
            label: k,
            classes: values.len(),
        });
    }
    let m = values.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let z = values.iter().fold(T::zero(), |acc, &v| acc + (v - m).exp());
    let loss = m + z.ln() - values[k];
    // Rounding can leave a -ulp residue when softmax_k is 1.
    Ok(loss.max(T::zero()))
}

/// Loss, logits and input gradient from one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad<T = f64> {
    pub loss: T,
    /// Shaped like the input image (H×W×3).
    pub grad: Tensor<T>,
    pub logits: Logits<T>,
}
