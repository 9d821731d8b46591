//! Feed-forward networks with exact reverse-mode gradients, plus optimizers.

mod checkpoint;
mod model;
mod optim;

pub use checkpoint::{decode_model, encode_model, load_model, save_model, CHECKPOINT_TAG, CHECKPOINT_VERSION};
pub use model::{
    cross_entropy, entropy_of, kl_divergence, softmax, PROB_FLOOR, Activation, Entry, GradBundle, LayerGrad,
    Layer, MlpModel, Objective, Tape,
};
pub use optim::{OptimizerKind, OptimizerState};
