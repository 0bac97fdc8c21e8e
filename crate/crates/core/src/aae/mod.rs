//! Adversarial autoencoder: a semi-supervised variant that splits the code
//! into a continuous latent `z` and a class distribution `y`, and an
//! unsupervised variant with `z` only.

mod model;
mod train;

pub use model::{
    verdict_from_probabilities, AaeMode, AaeModel, AaeModelFile, Architecture, LatentCodes,
    ModelHeader, Verdict, BENIGN, FRAUD, MODEL_FORMAT, MODEL_FORMAT_VERSION, N_CLASSES,
};
pub use train::{
    class_prior_from_labels, train, AaeTrainer, AdversarialLosses, EpochLosses, LossHistory,
    TrainConfig,
};
