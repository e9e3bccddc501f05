//! Minimal differentiable layers and the CNN-LSTM classifier.

pub mod adam;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod lstm;
pub mod model;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use layers::{GrlConfig, NormAxis};
pub use loss::{focal_loss, focal_loss_logits, Alpha, FocalConfig};
pub use model::{Checkpoint, ForwardOutput, Mode, Model, ModelConfig};
pub use tensor::Tensor;
