use super::curves::{error_vs_future_step, ErrorCurve, TvaePredictor};
use crate::error::Result;
use crate::trajkit::Dataset;
use crate::tvae::{train, TrainConfig};

/// Observations given to both models in the ablation.
pub const ABLATION_GIVEN: usize = 30;

#[derive(Clone, Debug)]
pub struct CiAblation {
    pub ci: ErrorCurve,
    pub full: ErrorCurve,
}

impl CiAblation {
    /// Mean over future steps of each curve, `(ci, full)`.
    pub fn means(&self) -> (f64, f64) {
        (self.ci.overall_mean(), self.full.overall_mean())
    }

    pub fn ci_not_worse(&self) -> bool {
        let (ci, full) = self.means();
        ci <= full
    }
}

/// Train twin models that differ only in whether the decoder sees the prefix,
/// and compare their future-step error curves on the test split.
pub fn ablation_ci(ds: &Dataset, cfg: &TrainConfig, samples: usize) -> Result<CiAblation> {
    let mut curves = Vec::with_capacity(2);
    for ci in [true, false] {
        let out = train(ds, &TrainConfig { ci, ..*cfg })?;
        let pred = TvaePredictor::new(out.model, samples, cfg.seed);
        curves.push(error_vs_future_step(&pred, ds, &cfg.grid, ABLATION_GIVEN)?);
    }
    let full = curves.pop().expect("two curves");
    let ci = curves.pop().expect("two curves");
    let a = CiAblation { ci, full };
    let (c, f) = a.means();
    log::info!("ablation: mean future error CI {c:.4} m, full {f:.4} m");
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ballsim::{synth_dataset, SynthConfig};
    use crate::trajkit::TimeGrid;

    #[test]
    fn twin_curves_differ_and_are_positive() {
        let grid = TimeGrid::new(1.0 / 60.0, 40, 0.0).unwrap();
        let ds = synth_dataset(&SynthConfig {
            train: 30,
            test: 6,
            grid,
            seed: 1,
            ..Default::default()
        })
        .unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 8,
            hidden: 8,
            latent: 4,
            grid,
            seed: 2,
            ..Default::default()
        };
        let a = ablation_ci(&ds, &cfg, 4).unwrap();
        assert!(!a.ci.points.is_empty());
        assert_eq!(a.ci.points.len(), a.full.points.len());
        assert_ne!(a.ci, a.full);
        for c in [&a.ci, &a.full] {
            assert!(c.points.iter().all(|p| p.mean.is_finite() && p.mean > 0.0));
        }
    }
}
