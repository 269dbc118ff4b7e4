//! One-dimensional U-Net that maps video-derived acceleration windows to
//! virtual sensor signals or single features.

pub mod adadelta;
pub mod checkpoint;
pub mod generate;
pub mod model;
pub mod tensor;
pub mod train;

pub use adadelta::AdadeltaState;
pub use checkpoint::{load_model, save_model, Checkpoint};
pub use generate::{generate_features, generate_signals, window_input};
pub use model::{Gradients, Head, ModelConfig, TransformModel};
pub use tensor::{loss_mae, Real, Tensor};
pub use train::{evaluate_mae, train, History, Sample, TrainConfig};
