//! The loss/gradient oracle consumed by attribution and evaluation.

use crate::codec::ImageBuf;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::loss::{loss_ce, Logits, LossGrad};

/// Evaluates `l(F(x), label)` and its gradient with respect to the image.
///
/// Implementations must be pure for the lifetime of an analysis run.
pub trait GradFn<T: Scalar = f64>: Sync {
    /// `(height, width, channels)` of accepted images.
    fn input_dims(&self) -> [usize; 3];

    fn num_classes(&self) -> usize;

    fn loss_grad(&self, image: &ImageBuf<T>, label: usize) -> Result<LossGrad<T>>;

    /// Logits only. The default reuses `loss_grad` with label 0.
    fn logits(&self, image: &ImageBuf<T>) -> Result<Logits<T>> {
        Ok(self.loss_grad(image, 0)?.logits)
    }

    fn check_input(&self, image: &ImageBuf<T>, label: usize) -> Result<()> {
        if image.dims() != self.input_dims() {
            return Err(Error::DimensionMismatch {
                op: "model input",
                left: image.dims().to_vec(),
                right: self.input_dims().to_vec(),
            });
        }
        let classes = self.num_classes();
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        Ok(())
    }
}

impl<T: Scalar, G: GradFn<T> + ?Sized> GradFn<T> for &G {
    fn input_dims(&self) -> [usize; 3] {
        (**self).input_dims()
    }
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }
    fn loss_grad(&self, image: &ImageBuf<T>, label: usize) -> Result<LossGrad<T>> {
        (**self).loss_grad(image, label)
    }
    fn logits(&self, image: &ImageBuf<T>) -> Result<Logits<T>> {
        (**self).logits(image)
    }
}

impl<T: Scalar, G: GradFn<T> + ?Sized + Send> GradFn<T> for Box<G> {
    fn input_dims(&self) -> [usize; 3] {
        (**self).input_dims()
    }
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }
    fn loss_grad(&self, image: &ImageBuf<T>, label: usize) -> Result<LossGrad<T>> {
        (**self).loss_grad(image, label)
    }
    fn logits(&self, image: &ImageBuf<T>) -> Result<Logits<T>> {
        (**self).logits(image)
    }
}

/// Arbitrary scalar loss `l(x)` given as a closure returning the value and the
/// flat gradient. The label is ignored; logits are empty.
pub struct ScalarLoss<F> {
    dims: [usize; 3],
    f: F,
}

impl<F> ScalarLoss<F> {
    pub fn new(dims: [usize; 3], f: F) -> Self {
        Self { dims, f }
    }
}

impl<T, F> GradFn<T> for ScalarLoss<F>
where
    T: Scalar,
    F: Fn(&[T]) -> (T, Vec<T>) + Sync,
{
    fn input_dims(&self) -> [usize; 3] {
        self.dims
    }

    fn num_classes(&self) -> usize {
        1
    }

    fn loss_grad(&self, image: &ImageBuf<T>, label: usize) -> Result<LossGrad<T>> {
        self.check_input(image, label)?;
        let (loss, grad) = (self.f)(image.data());
        Ok(LossGrad {
            loss,
            grad: Tensor::from_vec(&self.dims, grad)?,
            logits: Logits(Vec::new()),
        })
    }
}

/// Linear softmax classifier `logits = W·x + b` with cross-entropy loss.
///
/// Used as the analytic reference model behind the mock gradient provider.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearScorer<T = f64> {
    dims: [usize; 3],
    /// C × (H·W·3), row-major.
    weights: Tensor<T>,
    bias: Vec<T>,
}

impl<T: Scalar> LinearScorer<T> {
    pub fn new(dims: [usize; 3], weights: Tensor<T>, bias: Vec<T>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if weights.rank() != 2 || weights.shape()[1] != n || weights.shape()[0] != bias.len() {
            return Err(Error::DimensionMismatch {
                op: "linear scorer",
                left: weights.shape().to_vec(),
                right: vec![bias.len(), n],
            });
        }
        Ok(Self {
            dims,
            weights,
            bias,
        })
    }

    /// Seeded weights scaled so logits stay O(1) on images in [0, 1].
    pub fn random(dims: [usize; 3], classes: usize, seed: u64) -> Result<Self> {
        let n: usize = dims.iter().product();
        let mut rng = crate::rng::SeededRng::new(seed);
        let scale = T::of(1.0 / (n as f64).sqrt());
        let weights = rng.normal::<T>(&[classes, n])?.map(|v| v * scale)?;
        let bias = rng.normal::<T>(&[classes])?.into_data();
        Self::new(dims, weights, bias)
    }

    fn scores(&self, x: &[T]) -> Vec<T> {
        let n = x.len();
        self.weights
            .data()
            .chunks(n)
            .zip(&self.bias)
            .map(|(row, &b)| row.iter().zip(x).fold(b, |acc, (&w, &v)| acc + w * v))
            .collect()
    }
}

impl<T: Scalar> GradFn<T> for LinearScorer<T> {
    fn input_dims(&self) -> [usize; 3] {
        self.dims
    }

    fn num_classes(&self) -> usize {
        self.bias.len()
    }

    fn loss_grad(&self, image: &ImageBuf<T>, label: usize) -> Result<LossGrad<T>> {
        self.check_input(image, label)?;
        let x = image.data();
        let logits = Logits::new(self.scores(x))?;
        let loss = loss_ce(&logits, label)?;
        let mut delta = logits.softmax();
        delta[label] = delta[label] - T::one();
        let n = x.len();
        let mut grad = vec![T::zero(); n];
        for (row, &d) in self.weights.data().chunks(n).zip(&delta) {
            for (g, &w) in grad.iter_mut().zip(row) {
                *g = *g + d * w;
            }
        }
        Ok(LossGrad {
            loss,
            grad: Tensor::from_vec(&self.dims, grad)?,
            logits,
        })
    }

    fn logits(&self, image: &ImageBuf<T>) -> Result<Logits<T>> {
        self.check_input(image, 0)?;
        Logits::new(self.scores(image.data()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::test_image::noise_image;

    #[test]
    fn linear_scorer_gradient_matches_differences() {
        let model = LinearScorer::<f64>::random([2, 3, 3], 4, 9).unwrap();
        let img = noise_image(2, 3, 4);
        let lg = model.loss_grad(&img, 1).unwrap();
        let h = 1e-6;
        for i in 0..img.data().len() {
            let mut p = img.data().to_vec();
            let mut m = img.data().to_vec();
            p[i] += h;
            m[i] -= h;
            let lp = loss_ce(&Logits(model.scores(&p)), 1).unwrap();
            let lm = loss_ce(&Logits(model.scores(&m)), 1).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            assert!((fd - lg.grad.data()[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_wrong_dims() {
        let model = LinearScorer::<f64>::random([2, 2, 3], 3, 1).unwrap();
        let img = noise_image(2, 3, 4);
        assert!(model.loss_grad(&img, 0).is_err());
        let ok = noise_image(2, 2, 4);
        assert!(model.loss_grad(&ok, 3).is_err());
    }
}
