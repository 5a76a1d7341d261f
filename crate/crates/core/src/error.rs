use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no samples")]
    NoSamples,

    #[error("unordered: sample {index} has time {time} not after the previous sample")]
    Unordered { index: usize, time: f64 },

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("{what} {value} out of range (max {max})")]
    OutOfRange {
        what: &'static str,
        value: usize,
        max: usize,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate trajectory id {0}")]
    DuplicateId(u64),

    #[error("underdetermined: {observed} observed points, need at least {needed}")]
    Underdetermined { observed: usize, needed: usize },

    #[error("diverged: non-finite ball state at t = {time}")]
    Diverged { time: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("exploded: non-finite gradient in {tensor}")]
    Exploded { tensor: String },

    #[error("non-finite loss")]
    NonFiniteLoss,

    #[error("non-positive standard deviation {0}")]
    NonPositiveSigma(f64),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("need ≥2 samples, got {0}")]
    NeedTwoSamples(usize),

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Diverged { .. }
                | Error::Exploded { .. }
                | Error::NonFiniteLoss
                | Error::NonPositiveSigma(_)
                | Error::Underdetermined { .. }
        )
    }
}
