use serde::{Deserialize, Serialize};

use super::{make_prefix, MaskedTrajectory, Trajectory, ORIGIN};
use crate::error::{Error, Result};

/// Uniform sampling grid: step `i` sits at `origin + i * dt`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    dt: f64,
    steps: usize,
    origin: f64,
}

impl TimeGrid {
    pub const BALL_RATE_HZ: f64 = 180.0;
    pub const BALL_STEPS: usize = 216;

    pub fn new(dt: f64, steps: usize, origin: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("grid dt must be positive, got {dt}")));
        }
        if steps == 0 {
            return Err(Error::Config("grid needs at least one step".into()));
        }
        if !origin.is_finite() {
            return Err(Error::Config("grid origin must be finite".into()));
        }
        Ok(TimeGrid { dt, steps, origin })
    }

    /// 1.2 s at 180 Hz.
    pub fn ball() -> Self {
        TimeGrid {
            dt: 1.0 / Self::BALL_RATE_HZ,
            steps: Self::BALL_STEPS,
            origin: 0.0,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn time_at(&self, step: usize) -> f64 {
        self.origin + step as f64 * self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps as f64
    }

    /// Same spacing and length, shifted to start at `origin`.
    pub fn anchored_at(&self, origin: f64) -> Self {
        TimeGrid { origin, ..*self }
    }

    pub fn with_steps(&self, steps: usize) -> Result<Self> {
        Self::new(self.dt, steps, self.origin)
    }

    /// Index of the grid step nearest to `time`, if it lies within half a step of the grid.
    pub fn nearest_step(&self, time: f64) -> Option<usize> {
        let x = (time - self.origin) / self.dt;
        let i = x.round();
        if i < 0.0 || i >= self.steps as f64 {
            return None;
        }
        let i = i as usize;
        if (time - self.time_at(i)).abs() <= 0.5 * self.dt {
            Some(i)
        } else {
            None
        }
    }
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self::ball()
    }
}

/// Nearest-neighbour assignment of samples to grid steps within `dt / 2`.
///
/// A step whose nearest sample is flagged invalid, or that has no sample within
/// tolerance, is left unobserved. The result represents a full trajectory
/// (`cut == steps`).
pub fn resample_to_grid(traj: &Trajectory, grid: &TimeGrid) -> MaskedTrajectory {
    let n = grid.steps();
    let half = 0.5 * grid.dt();
    // (distance, sample index) of the best candidate per step
    let mut best: Vec<Option<(f64, usize)>> = vec![None; n];
    for (s, &t) in traj.times().iter().enumerate() {
        let x = (t - grid.origin()) / grid.dt();
        let lo = x.floor();
        for cand in [lo, lo + 1.0] {
            if cand < 0.0 || cand >= n as f64 {
                continue;
            }
            let i = cand as usize;
            let d = (t - grid.time_at(i)).abs();
            if d > half {
                continue;
            }
            match best[i] {
                Some((bd, _)) if bd <= d => {}
                _ => best[i] = Some((d, s)),
            }
        }
    }

    let mut values = vec![ORIGIN; n];
    let mut mask = vec![false; n];
    for (i, b) in best.iter().enumerate() {
        if let Some((_, s)) = *b {
            if traj.valid()[s] {
                values[i] = traj.positions()[s];
                mask[i] = true;
            }
        }
    }
    MaskedTrajectory::from_parts_unchecked(values, mask, n)
}

/// Resample onto a grid anchored at the trajectory's first sample and long
/// enough to cover every sample.
pub fn resample_full(traj: &Trajectory, dt: f64) -> Result<MaskedTrajectory> {
    let steps = (traj.duration() / dt).round() as usize + 1;
    let grid = TimeGrid::new(dt, steps, traj.start_time())?;
    Ok(resample_to_grid(traj, &grid))
}

/// Place every sample on its grid step, failing unless each lies within
/// `tol · dt` of a step inside the grid. Invalid samples stay unobserved; the
/// cut is one past the last observed step.
pub fn snap_to_grid(traj: &Trajectory, grid: &TimeGrid, tol: f64) -> Result<MaskedTrajectory> {
    let n = grid.steps();
    let mut values = vec![ORIGIN; n];
    let mut mask = vec![false; n];
    for (s, &t) in traj.times().iter().enumerate() {
        let i = grid
            .nearest_step(t)
            .filter(|&i| (t - grid.time_at(i)).abs() <= tol * grid.dt())
            .ok_or_else(|| {
                Error::GridMismatch(format!(
                    "sample {s} at t = {t} is not on the model grid (dt = {}, {} steps from {})",
                    grid.dt(),
                    n,
                    grid.origin()
                ))
            })?;
        if traj.valid()[s] {
            values[i] = traj.positions()[s];
            mask[i] = true;
        }
    }
    let m = MaskedTrajectory::from_parts_unchecked(values, mask, n);
    let end = m.observed_end();
    make_prefix(&m, end)
}
