//! Trajectory variational auto-encoder.
//!
//! An encoder maps a masked trajectory to a diagonal Gaussian over a latent
//! code; a decoder maps a code (and, unless the conditional-independence
//! variant is used, the observed prefix) to positions on the whole grid.

mod elbo;
mod infer;
mod model;
mod train;

pub use elbo::{draw_noise, elbo, elbo_batch, ElboItem, ElboOptions, ElboTerms};
pub use infer::{ensemble_moments, predict_ensemble, predict_ensemble_scaled, EnsembleMoments, PredictionEnsemble};
pub use model::{gaussian_kl, Architecture, LatentGaussian, Standardizer, TvaeGradients, TvaeModel, MODEL_MAGIC};
pub use train::{
    hyper_search, read_history, train, write_history, EpochRecord, SearchResult, SearchRow, TrainConfig, TrainOutcome,
    DEFAULT_HIDDEN_GRID, DEFAULT_LATENT_GRID,
};
