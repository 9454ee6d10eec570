//! Feed-forward networks with exact gradients, the Adam optimizer, Polyak
//! target updates and a flat binary snapshot format.

mod mlp;
mod optim;
pub mod snapshot;

pub use mlp::{Activation, GradientBundle, Layer, LayerGrad, Mlp, OutputActivation, PrefixEvaluator, Tape};
pub use optim::{soft_update, Adam, AdamConfig};
