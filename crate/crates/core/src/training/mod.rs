//! Losses, optimisers, the training loop and checkpoints.

mod checkpoint;
mod loss;
mod optim;
mod train;

pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use loss::{classification_loss, loss_var, rating_class, regression_loss, LossWeights};
pub use optim::{Optimizer, OptimizerKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use train::{
    accumulate_gradients, mean_loss, train, train_with, EpochRecord, TrainConfig, TrainOutcome,
};
