use super::{Point3, ORIGIN};
use crate::error::{Error, Result};

/// Zero-padded observations on a fixed grid plus a per-step observation mask.
///
/// Invariants: unobserved steps hold `(0, 0, 0)`; observed steps lie before
/// `cut`. A full trajectory has `cut == len()`.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedTrajectory {
    values: Vec<Point3>,
    mask: Vec<bool>,
    cut: usize,
}

impl MaskedTrajectory {
    pub fn new(values: Vec<Point3>, mask: Vec<bool>, cut: usize) -> Result<Self> {
        if values.len() != mask.len() {
            return Err(Error::Shape(format!(
                "{} values but {} mask entries",
                values.len(),
                mask.len()
            )));
        }
        if cut > values.len() {
            return Err(Error::OutOfRange {
                what: "cut",
                value: cut,
                max: values.len(),
            });
        }
        for (i, (v, &on)) in values.iter().zip(&mask).enumerate() {
            if on {
                if i >= cut {
                    return Err(Error::InvalidTrajectory(format!(
                        "step {i} observed at or after cut {cut}"
                    )));
                }
                if v.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidTrajectory(format!("non-finite value at step {i}")));
                }
            } else if *v != ORIGIN {
                return Err(Error::InvalidTrajectory(format!("unobserved step {i} holds a value")));
            }
        }
        Ok(MaskedTrajectory { values, mask, cut })
    }

    /// Fully observed trajectory over `values`.
    pub fn full(values: Vec<Point3>) -> Result<Self> {
        let n = values.len();
        Self::new(values, vec![true; n], n)
    }

    /// Nothing observed.
    pub fn empty(steps: usize) -> Self {
        MaskedTrajectory {
            values: vec![ORIGIN; steps],
            mask: vec![false; steps],
            cut: 0,
        }
    }

    pub(crate) fn from_parts_unchecked(values: Vec<Point3>, mask: Vec<bool>, cut: usize) -> Self {
        let m = MaskedTrajectory { values, mask, cut };
        debug_assert!(m.check_invariants(), "mask/value coupling violated");
        m
    }

    pub fn check_invariants(&self) -> bool {
        self.values.len() == self.mask.len()
            && self.cut <= self.values.len()
            && self
                .mask
                .iter()
                .zip(&self.values)
                .enumerate()
                .all(|(i, (&on, v))| if on { i < self.cut } else { *v == ORIGIN })
    }

    pub fn values(&self) -> &[Point3] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn cut(&self) -> usize {
        self.cut
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// One past the last observed step; 0 if nothing is observed.
    pub fn observed_end(&self) -> usize {
        self.mask.iter().rposition(|&b| b).map_or(0, |i| i + 1)
    }

    /// Smallest cut that keeps the first `count` observed steps, if there are that many.
    pub fn cut_after_observations(&self, count: usize) -> Option<usize> {
        if count == 0 {
            return Some(0);
        }
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .nth(count - 1)
            .map(|(i, _)| i + 1)
    }

    /// Unobserve every step at or after `end`, keeping `cut`.
    pub fn truncate_observations(&self, end: usize) -> Self {
        let mut out = self.clone();
        for i in end.min(out.len())..out.len() {
            out.mask[i] = false;
            out.values[i] = ORIGIN;
        }
        out
    }

    pub(crate) fn into_parts(self) -> (Vec<Point3>, Vec<bool>, usize) {
        (self.values, self.mask, self.cut)
    }
}

/// Keep observations before `t_cut`; everything from `t_cut` on becomes unobserved.
pub fn make_prefix(full: &MaskedTrajectory, t_cut: usize) -> Result<MaskedTrajectory> {
    if t_cut > full.len() {
        return Err(Error::OutOfRange {
            what: "cut",
            value: t_cut,
            max: full.len(),
        });
    }
    let mut values = full.values.clone();
    let mut mask = full.mask.clone();
    for i in t_cut..full.len() {
        mask[i] = false;
        values[i] = ORIGIN;
    }
    Ok(MaskedTrajectory::from_parts_unchecked(values, mask, t_cut))
}
