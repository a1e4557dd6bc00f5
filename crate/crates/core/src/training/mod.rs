//! Masked MSE, AdamW with step decay, and the mini-batch training loop.

mod loss;
mod optim;
mod predict;
mod trainer;

pub use loss::{masked_sse, mse, mse_loss};
pub use optim::{adamw_step, clip_global_norm, scheduler_lr, AdamState, TrainConfig};
pub use predict::{predict_checkpoint, predict_linear, predict_model};
pub use trainer::{
    fit_linear, model_config, train, train_observed, Control, EpochObserver, EpochRecord,
    ModelSpec, TrainHistory, TrainOutcome,
};
