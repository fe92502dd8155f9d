//! JSON checkpoint format for [`ScorerModel`].
//!
//! ```json
//! {
//!   "format": "qig-scorer",
//!   "version": 1,
//!   "input_shape": [32, 32, 3],
//!   "temperature": 100.0,
//!   "num_classes": 4,
//!   "embed_dim": 16,
//!   "class_names": ["airplane", "automobile", "bird", "cat"],
//!   "layers": [
//!     {"inputs": 3072, "outputs": 64, "activation": "relu",
//!      "weights": [/* outputs × inputs, row-major */], "bias": [/* outputs */]}
//!   ],
//!   "class_embeddings": [/* num_classes × embed_dim, row-major */]
//! }
//! ```
//! All arrays hold 64-bit floats.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::scorer::{Activation, Layer, ScorerModel};

pub const FORMAT: &str = "qig-scorer";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LayerDoc {
    inputs: usize,
    outputs: usize,
    activation: Activation,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointDoc {
    format: String,
    version: u32,
    input_shape: [usize; 3],
    temperature: f64,
    num_classes: usize,
    embed_dim: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    class_names: Vec<String>,
    layers: Vec<LayerDoc>,
    class_embeddings: Vec<f64>,
}

/// A model plus the class names it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T = f64> {
    pub model: ScorerModel<T>,
    pub class_names: Vec<String>,
}

fn to_f64<T: Scalar>(t: &Tensor<T>) -> Vec<f64> {
    t.data().iter().map(|v| v.to_f64_lossy()).collect()
}

fn from_f64<T: Scalar>(shape: &[usize], v: Vec<f64>) -> Result<Tensor<T>> {
    Tensor::from_vec(shape, v.into_iter().map(T::of).collect())
}

impl<T: Scalar> Checkpoint<T> {
    pub fn to_json(&self) -> Result<String> {
        let m = &self.model;
        let doc = CheckpointDoc {
            format: FORMAT.into(),
            version: VERSION,
            input_shape: m.input_dims,
            temperature: m.temperature.to_f64_lossy(),
            num_classes: m.class_embeddings.shape()[0],
            embed_dim: m.embed_dim(),
            class_names: self.class_names.clone(),
            layers: m
                .layers
                .iter()
                .map(|l| LayerDoc {
                    inputs: l.inputs(),
                    outputs: l.outputs(),
                    activation: l.activation,
                    weights: to_f64(&l.weights),
                    bias: to_f64(&l.bias),
                })
                .collect(),
            class_embeddings: to_f64(&m.class_embeddings),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CheckpointDoc = serde_json::from_str(text)?;
        if doc.format != FORMAT {
            return Err(Error::Model(format!(
                "not a {FORMAT} checkpoint: {:?}",
                doc.format
            )));
        }
        if doc.version != VERSION {
            return Err(Error::Model(format!(
                "unsupported checkpoint version {}",
                doc.version
            )));
        }
        if !doc.class_names.is_empty() && doc.class_names.len() != doc.num_classes {
            return Err(Error::Model(format!(
                "{} class names for {} classes",
                doc.class_names.len(),
                doc.num_classes
            )));
        }
        let layers = doc
            .layers
            .into_iter()
            .map(|l| {
                Layer::new(
                    from_f64(&[l.outputs, l.inputs], l.weights)?,
                    from_f64(&[l.outputs], l.bias)?,
                    l.activation,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let emb = from_f64(&[doc.num_classes, doc.embed_dim], doc.class_embeddings)?;
        let model = ScorerModel::new(layers, emb, T::of(doc.temperature), doc.input_shape)?;
        let class_names = if doc.class_names.is_empty() {
            (0..doc.num_classes).map(|c| format!("class{c}")).collect()
        } else {
            doc.class_names
        };
        Ok(Self { model, class_names })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
