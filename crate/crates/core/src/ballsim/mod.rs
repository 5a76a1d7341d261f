//! Table-tennis ball flight: quadratic air drag, gravity and table bounce, no spin.
//!
//! Also hosts the synthetic dataset generator and the physics baseline predictor
//! (polynomial launch-state estimate followed by forward integration).

mod baseline;
mod physics;
mod synth;

pub use baseline::{fit_initial_state, physics_predict, PhysicsPredictor, DEFAULT_FIT_DEGREE, DEFAULT_FIT_OBSERVATIONS};
pub use physics::{ball_dynamics, integrate_step, propagate, simulate, BallState, PhysicsParams};
pub use synth::{synth_dataset, LaunchDistribution, SynthConfig};
