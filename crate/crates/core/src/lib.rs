//! Trajectory forecasting with a conditional variational auto-encoder.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`trajkit`]: trajectories, fixed time grids, observation masks, datasets
//! - [`ballsim`]: table-tennis ball flight, synthetic data, physics baseline
//! - [`neuralkit`]: dense two-layer networks with analytic gradients and Adam
//! - [`tvae`]: the trajectory VAE, its evidence lower bound, training and sampling
//! - [`evalkit`]: error curves, the conditional-independence ablation, latency

pub mod ballsim;
pub mod config;
pub mod error;
pub mod evalkit;
pub mod neuralkit;
pub mod trajkit;
pub mod tvae;

pub use error::{Error, Result};
