//! Dense feed-forward networks with hand-derived gradients.
//!
//! Just enough machinery for the trajectory VAE: two-layer perceptrons,
//! reverse-mode backward passes, an Adam optimizer and a binary parameter file.

mod adam;
pub(crate) mod io;
mod mlp;

pub use adam::{AdamState, OptimizerKind, TensorSet};
pub use io::{read_params, write_params, PARAMS_MAGIC};
pub use mlp::{softplus, Activation, Dense, ForwardCache, GradientBundle, Mlp32, MlpParams, SIGMA_FLOOR};
