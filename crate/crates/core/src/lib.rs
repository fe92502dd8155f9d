//! Integrated-gradients attribution of the loss change caused by JPEG
//! degradation, with the codec, scorer and evaluation harness it needs.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below name the common concrete types.

pub mod codec;
pub mod error;
pub mod harness;
pub mod ig;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod verify;
pub mod viz;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type Image64 = codec::ImageBuf<f64>;
pub type Image32 = codec::ImageBuf<f32>;
pub type Scorer64 = model::ScorerModel<f64>;
pub type Scorer32 = model::ScorerModel<f32>;
pub type Attribution64 = ig::AttributionMap<f64>;
pub type Attribution32 = ig::AttributionMap<f32>;
