//! Minimal reverse-mode automatic differentiation with the layers and
//! optimizers the base listener and speaker need. Everything is `f64`.

mod checkpoint;
pub mod gradcheck;
mod graph;
mod layers;
mod optim;
mod params;
mod tensor;
mod train;

pub use checkpoint::{ArrayRecord, Checkpoint, DTYPE, FORMAT_VERSION};
pub use graph::{log_softmax, Graph, NodeId};
pub use layers::{Affine, Embedding, LstmCell, LstmState, EMBED_DIM, EMBED_INIT_STD, HIDDEN_DIM};
pub use optim::{Optimizer, OptimizerConfig, DEFAULT_CLIP_NORM};
pub use params::{init_fan_in, init_normal, Grads, ParamId, ParamSet, Parameter};
pub use tensor::Tensor;
pub use train::{fit, EpochStats, Goal, Objective, TrainConfig, TrainReport};
