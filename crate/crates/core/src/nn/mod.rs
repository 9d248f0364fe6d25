//! Fully connected propagator networks with analytic backpropagation.

pub mod loss;
pub mod mlp;
pub mod model;
pub mod train;

pub use loss::{block_trace_distances, mean_trace_distance, Loss, SquaredErrorLoss, TraceDistanceLoss, MTD_SMOOTHING};
pub use mlp::{param_count, Activation, Mlp, HIDDEN};
pub use model::{decode_network, encode_network, save_network, ModelMeta, PropagatorModel, MODEL_MAGIC};
pub use train::{fit, loss_and_gradient, predict, EpochStats, TrainConfig, TrainReport};
