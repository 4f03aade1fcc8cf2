//! Hand-written CNN engine with per-layer analytic gradients.

pub mod adam;
pub mod batchnorm;
pub mod checkpoint;
pub mod conv;
pub mod layers;
pub mod loss;
pub mod model;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use batchnorm::{batchnorm2d_backward, batchnorm2d_eval, batchnorm2d_train, update_running_stats, BnBatchStats, BnCache};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, CheckpointMeta};
pub use conv::{conv2d_backward, conv2d_forward, Conv2dGeom};
pub use layers::{
    adaptive_avg_pool2d, adaptive_avg_pool2d_backward, linear_backward, linear_forward, relu, relu_backward,
};
pub use loss::{argmax, softmax, softmax_cross_entropy};
pub use model::{count_params, ConvBlockConfig, ForwardCache, Gradients, Mode, Model, ModelConfig, TrainForward};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("batch norm needs at least 2 values per channel in train mode, got {values_per_channel}")]
    BatchTooSmall { values_per_channel: usize },
    #[error("model config: {0}")]
    Config(String),
}
