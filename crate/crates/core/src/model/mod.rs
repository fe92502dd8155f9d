//! Differentiable zero-shot scorers and the gradient-oracle abstraction.

mod check;
mod checkpoint;
mod gradfn;
mod loss;
mod scorer;
mod train;

pub use check::{gradient_check, GradCheck, REL_ERR_FLOOR};
pub use checkpoint::Checkpoint;
pub use gradfn::{GradFn, LinearScorer, ScalarLoss};
pub use loss::{loss_ce, Logits, LossGrad};
pub use scorer::{
    random_unit_rows, Activation, Layer, ScorerConfig, ScorerModel, DEFAULT_TEMPERATURE, NORM_EPS,
};
pub use train::{mean_loss, train, train_logged, TrainConfig};
