use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::physics::{simulate, BallState, PhysicsParams};
use crate::error::{Error, Result};
use crate::trajkit::{Aabb, Dataset, Record, Split, TimeGrid, Trajectory};

/// Launch states drawn uniformly from a position box, a speed range and a
/// direction cone around +x.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaunchDistribution {
    pub position: Aabb,
    pub speed: (f64, f64),
    /// Elevation above the horizontal plane, radians.
    pub elevation: (f64, f64),
    /// Heading around +x in the horizontal plane, radians.
    pub azimuth: (f64, f64),
}

impl Default for LaunchDistribution {
    fn default() -> Self {
        LaunchDistribution {
            position: Aabb {
                min: [-0.4, -0.1, 0.9],
                max: [-0.2, 0.1, 1.1],
            },
            speed: (4.0, 8.0),
            elevation: (5f64.to_radians(), 25f64.to_radians()),
            azimuth: (-15f64.to_radians(), 15f64.to_radians()),
        }
    }
}

impl LaunchDistribution {
    pub fn validate(&self) -> Result<()> {
        Aabb::new(self.position.min, self.position.max)?;
        for (name, (lo, hi)) in [
            ("speed", self.speed),
            ("elevation", self.elevation),
            ("azimuth", self.azimuth),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!("{name} range [{lo}, {hi}] is empty")));
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> BallState {
        let pick = |rng: &mut R, (lo, hi): (f64, f64)| lo + rng.random::<f64>() * (hi - lo);
        let position = self.position.sample(rng);
        let speed = pick(rng, self.speed);
        let elev = pick(rng, self.elevation);
        let azim = pick(rng, self.azimuth);
        let velocity = [
            speed * elev.cos() * azim.cos(),
            speed * elev.cos() * azim.sin(),
            speed * elev.sin(),
        ];
        BallState::new(position, velocity, 0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub train: usize,
    pub test: usize,
    pub launch: LaunchDistribution,
    pub grid: TimeGrid,
    pub physics: PhysicsParams,
    /// Standard deviation of the i.i.d. Gaussian sensor noise per coordinate, meters.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            train: 2000,
            test: 200,
            launch: LaunchDistribution::default(),
            grid: TimeGrid::ball(),
            physics: PhysicsParams::default(),
            noise_std: 0.01,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Split `count` trajectories in the 2000 : 200 proportion.
    pub fn with_count(count: usize) -> Self {
        let test = (count as f64 / 11.0).round() as usize;
        SynthConfig {
            train: count - test,
            test,
            ..Default::default()
        }
    }
}

/// Simulated trajectories with sensor noise; the noise-free path is kept as `truth`.
///
/// Trajectory `id` draws from its own stream of the seeded generator, so the
/// output does not depend on generation order.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<Dataset> {
    let count = cfg.train + cfg.test;
    if count == 0 {
        return Err(Error::EmptyDataset("requested zero trajectories"));
    }
    if !(cfg.noise_std >= 0.0 && cfg.noise_std.is_finite()) {
        return Err(Error::Config(format!("noise_std = {}", cfg.noise_std)));
    }
    cfg.launch.validate()?;
    cfg.physics.validate()?;
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::Config(e.to_string()))?;

    let mut records = Vec::with_capacity(count);
    for id in 0..count as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(id);
        let clean = loop {
            let init = cfg.launch.sample(&mut rng);
            // launches that hit the floor within two frames are redrawn
            match simulate(&init, &cfg.grid, &cfg.physics) {
                Ok(t) => break t,
                Err(Error::InvalidTrajectory(_)) => continue,
                Err(e) => return Err(e),
            }
        };
        let truth = clean.positions().to_vec();
        let noisy = truth
            .iter()
            .map(|p| {
                let mut q = *p;
                if cfg.noise_std > 0.0 {
                    for c in &mut q {
                        *c += noise.sample(&mut rng);
                    }
                }
                q
            })
            .collect();
        let traj = Trajectory::from_samples(id, clean.times().to_vec(), noisy)?;
        let split = if (id as usize) < cfg.train {
            Split::Train
        } else {
            Split::Test
        };
        records.push(Record {
            traj,
            split,
            truth: Some(truth),
        });
    }
    Dataset::new(records)
}
