//! Trajectory representation and the masked fixed-grid view the model consumes.
//!
//! Raw data arrives as time-stamped positions with occasional missing frames
//! ([`Trajectory`]). Everything downstream works on a [`MaskedTrajectory`]: a
//! zero-padded array on a uniform [`TimeGrid`] plus a per-step observation mask.

mod augment;
mod dataset;
mod grid;
mod masked;

pub use augment::{corrupt, window_sample, Aabb, CorruptionConfig};
pub use dataset::{read_dataset, write_dataset, Dataset, Record, Split};
pub use grid::{resample_full, resample_to_grid, snap_to_grid, TimeGrid};
pub use masked::{make_prefix, MaskedTrajectory};

use crate::error::{Error, Result};

/// A 3-D position in meters.
pub type Point3 = [f64; 3];

pub const ORIGIN: Point3 = [0.0; 3];

/// Time-stamped ball positions, possibly with invalid (missing) frames.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    id: u64,
    times: Vec<f64>,
    positions: Vec<Point3>,
    valid: Vec<bool>,
}

impl Trajectory {
    pub fn new(id: u64, times: Vec<f64>, positions: Vec<Point3>, valid: Vec<bool>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::NoSamples);
        }
        if times.len() != positions.len() || times.len() != valid.len() {
            return Err(Error::InvalidTrajectory(format!(
                "{} times, {} positions, {} validity flags",
                times.len(),
                positions.len(),
                valid.len()
            )));
        }
        if let Some(i) = times.iter().position(|t| !t.is_finite()) {
            return Err(Error::InvalidTrajectory(format!("non-finite time at sample {i}")));
        }
        for i in 1..times.len() {
            if times[i] <= times[i - 1] {
                return Err(Error::Unordered {
                    index: i,
                    time: times[i],
                });
            }
        }
        if let Some(i) = positions.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidTrajectory(format!("non-finite position at sample {i}")));
        }
        let n_valid = valid.iter().filter(|v| **v).count();
        if n_valid < 2 {
            return Err(Error::InvalidTrajectory(format!(
                "{n_valid} valid samples, need at least 2"
            )));
        }
        Ok(Trajectory {
            id,
            times,
            positions,
            valid,
        })
    }

    /// All samples valid.
    pub fn from_samples(id: u64, times: Vec<f64>, positions: Vec<Point3>) -> Result<Self> {
        let valid = vec![true; times.len()];
        Self::new(id, times, positions, valid)
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn positions(&self) -> &[Point3] {
        &self.positions
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn duration(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }
}
