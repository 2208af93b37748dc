//! MLP variational autoencoder over the 8 joint angles with a 2-D latent.

pub mod checkpoint;
pub mod loss;
pub mod mlp;
pub mod model;
pub mod train;

pub use checkpoint::{sha256_hex, to_precise_json};
pub use loss::{elbo_loss, kl_between, kl_to_standard_normal, LossBreakdown};
pub use model::{
    LatentAffine, LatentCoord, LatentPosterior, ModelCheckpoint, TrainingMetadata, Vae,
    DEFAULT_HIDDEN, LATENT_DIM,
};
pub use train::{fit, reconstruction_mse, train, AuxObjective, TrainConfig, DEFAULT_KL_WEIGHT};
