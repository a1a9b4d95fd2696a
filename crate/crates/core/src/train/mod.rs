//! Trainable filters, the kernel convolution layer, MLP heads, losses and
//! the projected Adam optimizer.

pub mod adam;
pub mod checkpoint;
pub mod filter;
pub mod fit;
pub mod layer;
pub mod loss;
pub mod mlp;
pub mod model;

pub use adam::{adam_step, Adam, AdamConfig, BoxMode};
pub use checkpoint::{Checkpoint, FilterRecord};
pub use filter::GraphFilter;
pub use fit::{train_classifier, train_frq, train_iso, ClassifierRun, EpochMetrics, FrqRun, IsoRun, LossKind, TrainConfig};
pub use layer::{GomkcnLayer, LayerShape, PreparedFilter};
pub use loss::{loss_frq, loss_iso, loss_iso_encoded, FrqOutput, IsoOutput};
pub use mlp::{softmax_cross_entropy, MlpGradient, MlpHead};
pub use model::{ClassificationOutput, GomkcnModel, ModelConfig, Pooling, PreparedGraph, Samples, Task};
