//! Gaussian-posterior encoder, conditional decoder and skip-connection fusion.

mod checkpoint;
mod layers;
mod model;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use layers::{Dense, Mlp, MlpCache, Real};
pub use model::{
    reparameterize, sigmoid, ConditionValue, Conditioning, GaussianPosterior, ModelShape,
    ModelState, OutputHead, LOG_VAR_MAX, LOG_VAR_MIN,
};
