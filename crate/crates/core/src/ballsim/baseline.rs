use nalgebra::{DMatrix, DVector};

use super::physics::{propagate, BallState, PhysicsParams};
use crate::error::{Error, Result};
use crate::trajkit::{MaskedTrajectory, Point3, TimeGrid};

/// Observations used for the launch-state fit.
pub const DEFAULT_FIT_OBSERVATIONS: usize = 30;
/// Polynomial degree of the launch-state fit.
pub const DEFAULT_FIT_DEGREE: usize = 2;

/// Per-coordinate polynomial coefficients in `τ = t − t0`, lowest order first.
struct LaunchFit {
    t0: f64,
    first_step: usize,
    coeffs: [DVector<f64>; 3],
}

impl LaunchFit {
    fn eval(&self, tau: f64) -> Point3 {
        let mut out = [0.0; 3];
        for (c, coeffs) in self.coeffs.iter().enumerate() {
            out[c] = coeffs.iter().rev().fold(0.0, |acc, a| acc * tau + a);
        }
        out
    }

    fn state(&self) -> BallState {
        let pos = self.eval(0.0);
        let vel = [0, 1, 2].map(|c| self.coeffs[c].get(1).copied().unwrap_or(0.0));
        BallState::new(pos, vel, self.t0)
    }
}

fn fit(obs: &MaskedTrajectory, n: usize, degree: usize, grid: &TimeGrid) -> Result<LaunchFit> {
    let used: Vec<usize> = obs
        .mask()
        .iter()
        .enumerate()
        .filter(|(_, &on)| on)
        .map(|(i, _)| i)
        .take(n)
        .collect();
    if used.len() < degree + 1 {
        return Err(Error::Underdetermined {
            observed: used.len(),
            needed: degree + 1,
        });
    }
    let first_step = used[0];
    let t0 = grid.time_at(first_step);
    let rows = used.len();
    let vander = DMatrix::from_fn(rows, degree + 1, |r, j| (grid.time_at(used[r]) - t0).powi(j as i32));
    let qr = vander.qr();
    let coeffs = [0, 1, 2].map(|c| {
        let rhs = DVector::from_iterator(rows, used.iter().map(|&i| obs.values()[i][c]));
        let qtb = qr.q().transpose() * rhs;
        qr.r()
            .solve_upper_triangular(&qtb)
            .unwrap_or_else(|| DVector::from_element(degree + 1, f64::NAN))
    });
    if coeffs.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
        return Err(Error::Underdetermined {
            observed: rows,
            needed: degree + 1,
        });
    }
    Ok(LaunchFit {
        t0,
        first_step,
        coeffs,
    })
}

/// Least-squares polynomial of degree `degree` through the first `n` observed
/// samples, per coordinate; position and velocity at the first observed sample.
pub fn fit_initial_state(obs: &MaskedTrajectory, n: usize, degree: usize, grid: &TimeGrid) -> Result<BallState> {
    fit(obs, n, degree, grid).map(|f| f.state())
}

/// Positions on every grid step predicted by integrating the fitted launch state.
/// Steps before the first observation are filled from the fitted polynomial.
pub fn physics_predict(
    prefix: &MaskedTrajectory,
    grid: &TimeGrid,
    p: &PhysicsParams,
    n: usize,
    degree: usize,
) -> Result<Vec<Point3>> {
    let f = fit(prefix, n, degree, grid)?;
    let steps = grid.steps();
    let mut out: Vec<Point3> = (0..f.first_step)
        .map(|i| f.eval(grid.time_at(i) - f.t0))
        .collect();
    let states = propagate(&f.state(), grid.dt(), steps - f.first_step, p)?;
    out.extend(states.iter().map(BallState::point));
    Ok(out)
}

/// The physics baseline with its fit settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicsPredictor {
    pub params: PhysicsParams,
    pub grid: TimeGrid,
    pub fit_observations: usize,
    pub fit_degree: usize,
}

impl PhysicsPredictor {
    pub fn new(params: PhysicsParams, grid: TimeGrid) -> Self {
        PhysicsPredictor {
            params,
            grid,
            fit_observations: DEFAULT_FIT_OBSERVATIONS,
            fit_degree: DEFAULT_FIT_DEGREE,
        }
    }

    pub fn predict(&self, prefix: &MaskedTrajectory) -> Result<Vec<Point3>> {
        physics_predict(prefix, &self.grid, &self.params, self.fit_observations, self.fit_degree)
    }
}
