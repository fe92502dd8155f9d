//! CLIP-shaped zero-shot scorer: MLP image encoder, L2-normalized embedding,
//! temperature-scaled dot products with frozen class embeddings.

use serde::{Deserialize, Serialize};

use crate::codec::ImageBuf;
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::gradfn::GradFn;
use super::loss::{loss_ce, Logits, LossGrad};

/// Floor on the embedding norm before normalization.
pub const NORM_EPS: f64 = 1e-12;

/// CLIP-like logit scale.
pub const DEFAULT_TEMPERATURE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

/// Dense layer `act(W·h + b)` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T = f64> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    pub activation: Activation,
}

impl<T: Scalar> Layer<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>, activation: Activation) -> Result<Self> {
        if weights.rank() != 2 || bias.shape() != [weights.shape()[0]] {
            return Err(Error::DimensionMismatch {
                op: "layer",
                left: weights.shape().to_vec(),
                right: bias.shape().to_vec(),
            });
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[0]
    }

    fn pre_activation(&self, h: &[T]) -> Vec<T> {
        let n = self.inputs();
        self.weights
            .data()
            .chunks(n)
            .zip(self.bias.data())
            .map(|(row, &b)| row.iter().zip(h).fold(b, |acc, (&w, &v)| acc + w * v))
            .collect()
    }
}

/// Architecture of a freshly initialized scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerConfig {
    pub input_dims: [usize; 3],
    /// Widths of the ReLU hidden layers.
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    pub classes: usize,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScorerModel<T = f64> {
    pub(crate) layers: Vec<Layer<T>>,
    /// C × d, unit rows. Never updated by training.
    pub(crate) class_embeddings: Tensor<T>,
    pub(crate) temperature: T,
    pub(crate) input_dims: [usize; 3],
}

/// Intermediate values of one forward pass.
pub(crate) struct Trace<T> {
    /// `acts[0]` is the flattened input, `acts[i+1]` the output of layer i.
    pub acts: Vec<Vec<T>>,
    pub pre: Vec<Vec<T>>,
    pub norm: T,
    pub unit: Vec<T>,
    pub logits: Logits<T>,
}

/// Parameter gradients, laid out like the model's layers.
#[derive(Debug, Clone)]
pub(crate) struct ParamGrads<T> {
    pub weights: Vec<Vec<T>>,
    pub bias: Vec<Vec<T>>,
}

impl<T: Scalar> ParamGrads<T> {
    pub fn zeros_like(model: &ScorerModel<T>) -> Self {
        Self {
            weights: model
                .layers
                .iter()
                .map(|l| vec![T::zero(); l.weights.len()])
                .collect(),
            bias: model
                .layers
                .iter()
                .map(|l| vec![T::zero(); l.bias.len()])
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        let pairs = self
            .weights
            .iter_mut()
            .zip(&other.weights)
            .chain(self.bias.iter_mut().zip(&other.bias));
        for (a, b) in pairs {
            for (x, &y) in a.iter_mut().zip(b) {
                *x = *x + y;
            }
        }
    }
}

impl<T: Scalar> ScorerModel<T> {
    pub fn new(
        layers: Vec<Layer<T>>,
        class_embeddings: Tensor<T>,
        temperature: T,
        input_dims: [usize; 3],
    ) -> Result<Self> {
        if temperature.is_nan() || temperature <= T::zero() {
            return Err(Error::Model(format!(
                "temperature must be > 0, got {temperature}"
            )));
        }
        if layers.is_empty() {
            return Err(Error::Model("at least one layer required".into()));
        }
        let mut width: usize = input_dims.iter().product();
        for (i, layer) in layers.iter().enumerate() {
            if layer.inputs() != width {
                return Err(Error::Model(format!(
                    "layer {i} expects {} inputs but receives {width}",
                    layer.inputs()
                )));
            }
            width = layer.outputs();
        }
        if class_embeddings.rank() != 2 || class_embeddings.shape()[1] != width {
            return Err(Error::Model(format!(
                "class embeddings {:?} do not match embedding width {width}",
                class_embeddings.shape()
            )));
        }
        for (j, row) in class_embeddings.data().chunks(width).enumerate() {
            let norm = row.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
            let tol = T::of(1e-12).max(T::epsilon() * T::of(16.0));
            if (norm - T::one()).abs() > tol {
                return Err(Error::Model(format!("class embedding {j} has norm {norm}")));
            }
        }
        Ok(Self {
            layers,
            class_embeddings,
            temperature,
            input_dims,
        })
    }

    /// He-initialized encoder and seeded random unit class embeddings.
    pub fn random(cfg: &ScorerConfig, seed: u64) -> Result<Self> {
        let mut rng = SeededRng::new(seed);
        let mut widths = vec![cfg.input_dims.iter().product::<usize>()];
        widths.extend(&cfg.hidden);
        widths.push(cfg.embed_dim);
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (i, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let last = i == widths.len() - 2;
            let std = T::of((2.0 / fan_in as f64).sqrt());
            let weights = rng.normal::<T>(&[fan_out, fan_in])?.map(|v| v * std)?;
            let bias = Tensor::zeros(&[fan_out])?;
            let act = if last {
                Activation::Identity
            } else {
                Activation::Relu
            };
            layers.push(Layer::new(weights, bias, act)?);
        }
        let class_embeddings = random_unit_rows(&mut rng, cfg.classes, cfg.embed_dim)?;
        Self::new(
            layers,
            class_embeddings,
            T::of(cfg.temperature),
            cfg.input_dims,
        )
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn class_embeddings(&self) -> &Tensor<T> {
        &self.class_embeddings
    }

    pub fn temperature(&self) -> T {
        self.temperature
    }

    pub fn embed_dim(&self) -> usize {
        self.class_embeddings.shape()[1]
    }

    pub(crate) fn check_dims(&self, image: &ImageBuf<T>) -> Result<()> {
        if image.dims() != self.input_dims {
            return Err(Error::DimensionMismatch {
                op: "model input",
                left: image.dims().to_vec(),
                right: self.input_dims.to_vec(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, image: &ImageBuf<T>) -> Result<Logits<T>> {
        self.check_input(image, 0)?;
        Ok(self.trace(image.data()).logits)
    }

    pub fn backward(&self, image: &ImageBuf<T>, k: usize) -> Result<LossGrad<T>> {
        self.check_input(image, k)?;
        let trace = self.trace(image.data());
        let (loss, grad, _) = self.backprop(&trace, k, false)?;
        Ok(LossGrad {
            loss,
            grad: Tensor::from_vec(&self.input_dims, grad)?,
            logits: trace.logits,
        })
    }

    pub(crate) fn trace(&self, x: &[T]) -> Trace<T> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        acts.push(x.to_vec());
        for layer in &self.layers {
            let z = layer.pre_activation(acts.last().expect("input pushed"));
            let h = match layer.activation {
                Activation::Relu => z.iter().map(|&v| v.max(T::zero())).collect(),
                Activation::Identity => z.clone(),
            };
            pre.push(z);
            acts.push(h);
        }
        let e = acts.last().expect("at least one layer");
        let norm = e.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
        let denom = norm.max(T::of(NORM_EPS));
        let unit: Vec<T> = e.iter().map(|&v| v / denom).collect();
        let d = unit.len();
        let logits = self
            .class_embeddings
            .data()
            .chunks(d)
            .map(|row| {
                self.temperature
                    * row
                        .iter()
                        .zip(&unit)
                        .fold(T::zero(), |a, (&z, &u)| a + z * u)
            })
            .collect();
        Trace {
            acts,
            pre,
            norm,
            unit,
            logits: Logits(logits),
        }
    }

    /// Reverse pass from the loss. Returns the loss, the input gradient and,
    /// when requested, parameter gradients.
    pub(crate) fn backprop(
        &self,
        trace: &Trace<T>,
        k: usize,
        want_params: bool,
    ) -> Result<(T, Vec<T>, Option<ParamGrads<T>>)> {
        let loss = loss_ce(&trace.logits, k)?;
        let mut dlogits = trace.logits.softmax();
        dlogits[k] = dlogits[k] - T::one();

        let d = self.embed_dim();
        // dl/dê = τ·Zᵀ·dlogits
        let mut dunit = vec![T::zero(); d];
        for (row, &g) in self.class_embeddings.data().chunks(d).zip(&dlogits) {
            for (u, &z) in dunit.iter_mut().zip(row) {
                *u = *u + self.temperature * g * z;
            }
        }
        // Through ê = e / max(‖e‖, ε).
        let mut dh: Vec<T> = if trace.norm > T::of(NORM_EPS) {
            let proj = trace
                .unit
                .iter()
                .zip(&dunit)
                .fold(T::zero(), |a, (&u, &g)| a + u * g);
            dunit
                .iter()
                .zip(&trace.unit)
                .map(|(&g, &u)| (g - u * proj) / trace.norm)
                .collect()
        } else {
            dunit.iter().map(|&g| g / T::of(NORM_EPS)).collect()
        };

        let mut params = want_params.then(|| ParamGrads::zeros_like(self));
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let dz: Vec<T> = match layer.activation {
                Activation::Identity => dh,
                Activation::Relu => dh
                    .iter()
                    .zip(&trace.pre[li])
                    .map(|(&g, &z)| if z > T::zero() { g } else { T::zero() })
                    .collect(),
            };
            let n_in = layer.inputs();
            let input = &trace.acts[li];
            if let Some(p) = params.as_mut() {
                for (o, &g) in dz.iter().enumerate() {
                    if g == T::zero() {
                        continue;
                    }
                    let row = &mut p.weights[li][o * n_in..(o + 1) * n_in];
                    for (w, &x) in row.iter_mut().zip(input) {
                        *w = *w + g * x;
                    }
                    p.bias[li][o] = p.bias[li][o] + g;
                }
            }
            let mut prev = vec![T::zero(); n_in];
            for (row, &g) in layer.weights.data().chunks(n_in).zip(&dz) {
                if g == T::zero() {
                    continue;
                }
                for (p, &w) in prev.iter_mut().zip(row) {
                    *p = *p + g * w;
                }
            }
            dh = prev;
        }
        if dh.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("backward"));
        }
        Ok((loss, dh, params))
    }

    /// ReLU on/off pattern for every hidden unit; used to detect kinks.
    pub(crate) fn activation_pattern(&self, x: &[T]) -> Vec<bool> {
        let trace = self.trace(x);
        self.layers
            .iter()
            .zip(&trace.pre)
            .filter(|(l, _)| l.activation == Activation::Relu)
            .flat_map(|(_, z)| z.iter().map(|&v| v > T::zero()).collect::<Vec<_>>())
            .collect()
    }
}

impl<T: Scalar> GradFn<T> for ScorerModel<T> {
    fn input_dims(&self) -> [usize; 3] {
        self.input_dims
    }

    fn num_classes(&self) -> usize {
        self.class_embeddings.shape()[0]
    }

    fn loss_grad(&self, image: &ImageBuf<T>, label: usize) -> Result<LossGrad<T>> {
        self.backward(image, label)
    }

    fn logits(&self, image: &ImageBuf<T>) -> Result<Logits<T>> {
        self.forward(image)
    }
}

/// `rows × dim` matrix of independent unit-norm Gaussian directions.
pub fn random_unit_rows<T: Scalar>(
    rng: &mut SeededRng,
    rows: usize,
    dim: usize,
) -> Result<Tensor<T>> {
    let raw = rng.normal::<f64>(&[rows, dim])?;
    let mut data = Vec::with_capacity(rows * dim);
    for row in raw.data().chunks(dim) {
        let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        data.extend(row.iter().map(|&v| T::of(v / n)));
    }
    Tensor::from_vec(&[rows, dim], data)
}
