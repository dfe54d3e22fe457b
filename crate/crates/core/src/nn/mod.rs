//! Dense `f64` transformer core: tensors, attention, layer norm, GELU
//! feed-forward blocks, cross-entropy, AdamW and exact backpropagation.

pub mod checkpoint;
pub mod gradcheck;
pub mod model;
pub mod ops;
pub mod tensor;
pub mod train;

pub use model::{HeadKind, ModelConfig, ModelError, Params, TransformerModel};
pub use ops::{attention, attention_scaled, attention_weights, softmax, ShapeError};
pub use tensor::Tensor2;
pub use train::{AdamW, Sample, TrainConfig, TrainError, Trainer};
