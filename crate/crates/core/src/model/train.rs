//! Minibatch SGD on the cross-entropy loss. Class embeddings stay frozen.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::Dataset;
use crate::rng::SeededRng;
use crate::scalar::Scalar;

use super::scorer::{ParamGrads, ScorerModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            epochs: 20,
            batch: 32,
            seed: 0,
        }
    }
}

pub fn train<T: Scalar>(
    model: ScorerModel<T>,
    dataset: &Dataset<T>,
    cfg: &TrainConfig,
) -> Result<ScorerModel<T>> {
    train_logged(model, dataset, cfg, |_, _| {})
}

/// As [`train`], calling `on_epoch(epoch, mean_batch_loss)` after each epoch.
pub fn train_logged<T: Scalar>(
    mut model: ScorerModel<T>,
    dataset: &Dataset<T>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<ScorerModel<T>> {
    if dataset.is_empty() {
        return Err(Error::Empty("train"));
    }
    if cfg.batch == 0 {
        return Err(Error::InvalidArgument(
            "batch size must be at least 1".into(),
        ));
    }
    let classes = model.class_embeddings.shape()[0];
    if let Some(bad) = dataset.items().iter().find(|i| i.label >= classes) {
        return Err(Error::LabelOutOfRange {
            label: bad.label,
            classes,
        });
    }
    let items = dataset.items();
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut rng = SeededRng::new(cfg.seed);
    let lr = T::of(cfg.lr);

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch) {
            let per_sample: Vec<(T, ParamGrads<T>)> = batch
                .par_iter()
                .map(|&i| {
                    let item = &items[i];
                    model.check_dims(&item.image)?;
                    let trace = model.trace(item.image.data());
                    let (loss, _, grads) = model.backprop(&trace, item.label, true)?;
                    Ok((loss, grads.expect("requested")))
                })
                .collect::<Result<_>>()?;
            // Reduce in batch order for run-to-run determinism.
            let mut total = ParamGrads::zeros_like(&model);
            for (loss, g) in &per_sample {
                epoch_loss += loss.to_f64_lossy();
                total.add_assign(g);
            }
            let step = lr / T::of(batch.len() as f64);
            for (layer, (gw, gb)) in model
                .layers
                .iter_mut()
                .zip(total.weights.iter().zip(&total.bias))
            {
                for (w, &g) in layer.weights.data_mut().iter_mut().zip(gw) {
                    *w = *w - step * g;
                }
                for (b, &g) in layer.bias.data_mut().iter_mut().zip(gb) {
                    *b = *b - step * g;
                }
            }
        }
        let mean = epoch_loss / items.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite("train"));
        }
        on_epoch(epoch, mean);
    }
    Ok(model)
}

/// Mean cross-entropy over a dataset.
pub fn mean_loss<T: Scalar>(model: &ScorerModel<T>, dataset: &Dataset<T>) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Empty("mean_loss"));
    }
    let losses: Vec<f64> = dataset
        .items()
        .par_iter()
        .map(|item| Ok(model.backward(&item.image, item.label)?.loss.to_f64_lossy()))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}
