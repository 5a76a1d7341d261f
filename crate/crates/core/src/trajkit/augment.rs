use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{MaskedTrajectory, Point3, ORIGIN};
use crate::error::{Error, Result};

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn new(min: Point3, max: Point3) -> Result<Self> {
        for c in 0..3 {
            if !(min[c].is_finite() && max[c].is_finite()) || min[c] > max[c] {
                return Err(Error::Config(format!(
                    "box axis {c}: [{}, {}] is not a finite interval",
                    min[c], max[c]
                )));
            }
        }
        Ok(Aabb { min, max })
    }

    /// Bounding box of `points`; `None` when empty.
    pub fn around<'a>(points: impl IntoIterator<Item = &'a Point3>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let (mut min, mut max) = (first, first);
        for p in it {
            for c in 0..3 {
                min[c] = min[c].min(p[c]);
                max[c] = max[c].max(p[c]);
            }
        }
        Some(Aabb { min, max })
    }

    /// Grow every side by `frac` of the extent along that axis.
    pub fn inflate(&self, frac: f64) -> Self {
        let mut out = *self;
        for c in 0..3 {
            let pad = frac * (self.max[c] - self.min[c]);
            out.min[c] -= pad;
            out.max[c] += pad;
        }
        out
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|c| p[c] >= self.min[c] && p[c] <= self.max[c])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point3 {
        let mut p = ORIGIN;
        for c in 0..3 {
            let u: f64 = rng.random();
            p[c] = self.min[c] + u * (self.max[c] - self.min[c]);
        }
        p
    }
}

/// Missing-frame and outlier injection applied to training prefixes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionConfig {
    pub p_miss: f64,
    pub p_outlier: f64,
    pub domain: Aabb,
}

impl CorruptionConfig {
    pub const DEFAULT_P_MISS: f64 = 0.05;
    pub const DEFAULT_P_OUTLIER: f64 = 0.01;

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_miss", self.p_miss), ("p_outlier", self.p_outlier)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is not a probability")));
            }
        }
        Aabb::new(self.domain.min, self.domain.max).map(|_| ())
    }
}

/// Drop each observed step before the cut with probability `p_miss`, then replace
/// each surviving one with a uniform draw from `domain` with probability `p_outlier`.
pub fn corrupt<R: Rng + ?Sized>(
    m: &MaskedTrajectory,
    p_miss: f64,
    p_outlier: f64,
    domain: &Aabb,
    rng: &mut R,
) -> MaskedTrajectory {
    let (mut values, mut mask, cut) = m.clone().into_parts();
    for i in 0..cut {
        if !mask[i] {
            continue;
        }
        if rng.random_bool(p_miss.clamp(0.0, 1.0)) {
            mask[i] = false;
            values[i] = ORIGIN;
        } else if rng.random_bool(p_outlier.clamp(0.0, 1.0)) {
            values[i] = domain.sample(rng);
        }
    }
    MaskedTrajectory::from_parts_unchecked(values, mask, cut)
}

/// Fit an arbitrary-length trajectory to `steps` grid steps.
///
/// Short sources are padded with unobserved steps. Longer ones yield a
/// uniformly chosen contiguous window of exactly `steps`.
pub fn window_sample<R: Rng + ?Sized>(
    source: &MaskedTrajectory,
    steps: usize,
    rng: &mut R,
) -> MaskedTrajectory {
    let len = source.len();
    if len <= steps {
        let mut values = source.values().to_vec();
        let mut mask = source.mask().to_vec();
        values.resize(steps, ORIGIN);
        mask.resize(steps, false);
        let cut = if source.cut() == len { steps } else { source.cut() };
        return MaskedTrajectory::from_parts_unchecked(values, mask, cut);
    }
    let start = rng.random_range(0..=len - steps);
    let end = start + steps;
    let values = source.values()[start..end].to_vec();
    let mask = source.mask()[start..end].to_vec();
    let cut = source.cut().saturating_sub(start).min(steps);
    let cut = if source.cut() == len { steps } else { cut };
    MaskedTrajectory::from_parts_unchecked(values, mask, cut)
}
