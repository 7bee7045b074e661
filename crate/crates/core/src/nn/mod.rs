//! Multilayer perceptrons, SGD, and checkpoint files.

mod checkpoint;
mod mlp;
mod sgd;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, SUPPORTED_VERSIONS,
};
pub use mlp::{init_model, Activation, ForwardCache, Gradients, MlpModel, MlpSpec};
pub use sgd::{Sgd, SgdConfig};
