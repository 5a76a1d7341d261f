use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ballsim::PhysicsPredictor;
use crate::error::{Error, Result};
use crate::trajkit::{make_prefix, resample_to_grid, Dataset, MaskedTrajectory, Point3, Split, TimeGrid, Trajectory};
use crate::tvae::{predict_ensemble, TvaeModel};

/// Maps an observed prefix on the evaluation grid to positions on every step.
pub trait Predictor {
    fn tag(&self) -> &str;
    fn predict(&self, prefix: &MaskedTrajectory) -> Result<Vec<Point3>>;
}

impl Predictor for PhysicsPredictor {
    fn tag(&self) -> &str {
        "physics"
    }

    fn predict(&self, prefix: &MaskedTrajectory) -> Result<Vec<Point3>> {
        PhysicsPredictor::predict(self, prefix)
    }
}

/// Ensemble mean of a trained model. Every call draws from the same seeded
/// stream, so a prediction depends only on its prefix.
#[derive(Clone, Debug)]
pub struct TvaePredictor {
    pub model: TvaeModel,
    pub samples: usize,
    pub seed: u64,
}

impl TvaePredictor {
    pub fn new(model: TvaeModel, samples: usize, seed: u64) -> Self {
        TvaePredictor { model, samples, seed }
    }
}

impl Predictor for TvaePredictor {
    fn tag(&self) -> &str {
        "tvae"
    }

    fn predict(&self, prefix: &MaskedTrajectory) -> Result<Vec<Point3>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok(predict_ensemble(&self.model, prefix, self.samples, &mut rng)?.mean())
    }
}

/// Any closure as a predictor.
pub struct FnPredictor<F> {
    pub tag: String,
    pub f: F,
}

impl<F: Fn(&MaskedTrajectory) -> Result<Vec<Point3>>> Predictor for FnPredictor<F> {
    fn tag(&self) -> &str {
        &self.tag
    }

    fn predict(&self, prefix: &MaskedTrajectory) -> Result<Vec<Point3>> {
        (self.f)(prefix)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Abscissa {
    /// Steps past the cut, starting at 0.
    FutureStep,
    /// Number of given observations.
    Given,
}

impl Abscissa {
    fn label(self) -> &'static str {
        match self {
            Abscissa::FutureStep => "future_step",
            Abscissa::Given => "given",
        }
    }
}

/// Which grid steps count toward a trajectory's error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ErrorScope {
    /// Only steps at or after the cut.
    Future,
    /// Every step with ground truth, past and future.
    #[default]
    Whole,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub x: usize,
    /// Meters.
    pub mean: f64,
    /// Sample standard deviation across trajectories; 0 for a single one.
    pub std: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorCurve {
    pub abscissa: Abscissa,
    pub points: Vec<CurvePoint>,
    /// Trajectories left out because they were too short, summed over points.
    pub skipped: usize,
}

impl ErrorCurve {
    pub fn at(&self, x: usize) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.x == x)
    }

    /// Mean of the per-point means.
    pub fn overall_mean(&self) -> f64 {
        if self.points.is_empty() {
            return f64::NAN;
        }
        self.points.iter().map(|p| p.mean).sum::<f64>() / self.points.len() as f64
    }

    /// First abscissa whose mean is within `(1 + tol)` of the best value at or
    /// after it, i.e. where the curve stops improving materially.
    pub fn plateau_onset(&self, tol: f64) -> Option<usize> {
        (0..self.points.len())
            .find(|&i| {
                let best = self.points[i..].iter().map(|p| p.mean).fold(f64::INFINITY, f64::min);
                self.points[i].mean <= (1.0 + tol) * best
            })
            .map(|i| self.points[i].x)
    }

    pub fn write_csv<W: Write + ?Sized>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{},mean,std,n", self.abscissa.label())?;
        for p in &self.points {
            writeln!(w, "{},{},{},{}", p.x, p.mean, p.std, p.n)?;
        }
        Ok(())
    }

    /// Parse the output of [`ErrorCurve::write_csv`]. The skip count is not
    /// part of the file and reads back as zero.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or(Error::Parse { line: 1, message: "empty file".into() })??;
        let abscissa = match header.split(',').next() {
            Some("future_step") => Abscissa::FutureStep,
            Some("given") => Abscissa::Given,
            other => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("unknown abscissa column {other:?}"),
                })
            }
        };
        let mut points = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: &str| Error::Parse { line: i + 2, message: message.into() };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(err("expected 4 fields"));
            }
            points.push(CurvePoint {
                x: f[0].parse().map_err(|_| err("bad abscissa"))?,
                mean: f[1].parse().map_err(|_| err("bad mean"))?,
                std: f[2].parse().map_err(|_| err("bad std"))?,
                n: f[3].parse().map_err(|_| err("bad count"))?,
            });
        }
        Ok(ErrorCurve { abscissa, points, skipped: 0 })
    }
}

fn distance(a: &Point3, b: &Point3) -> f64 {
    (0..3).map(|c| (a[c] - b[c]).powi(2)).sum::<f64>().sqrt()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// A test trajectory on the evaluation grid: noisy observations and the
/// reference positions the error is measured against.
struct EvalCase {
    id: u64,
    observed: MaskedTrajectory,
    reference: MaskedTrajectory,
}

fn cases(test: &Dataset, grid: &TimeGrid) -> Result<Vec<EvalCase>> {
    let mut out: Vec<EvalCase> = test
        .split(Split::Test)
        .map(|r| {
            let g = grid.anchored_at(r.traj.start_time());
            let reference = Trajectory::new(
                r.traj.id(),
                r.traj.times().to_vec(),
                r.reference().to_vec(),
                vec![true; r.traj.len()],
            )?;
            Ok(EvalCase {
                id: r.traj.id(),
                observed: resample_to_grid(&r.traj, &g),
                reference: resample_to_grid(&reference, &g),
            })
        })
        .collect::<Result<_>>()?;
    out.sort_by_key(|c| c.id);
    Ok(out)
}

/// Per-step distances for one case cut after `given` observations, or `None`
/// when the case has no reference step left to predict.
fn case_errors(pred: &dyn Predictor, case: &EvalCase, given: usize) -> Result<Option<(usize, Vec<Option<f64>>)>> {
    let Some(cut) = case.observed.cut_after_observations(given) else {
        return Ok(None);
    };
    let end = case.reference.observed_end();
    if cut >= end {
        return Ok(None);
    }
    let prefix = make_prefix(&case.observed, cut)?;
    let y = pred.predict(&prefix)?;
    if y.len() != case.reference.len() {
        return Err(Error::GridMismatch(format!(
            "{} predicted {} steps, evaluation grid has {}",
            pred.tag(),
            y.len(),
            case.reference.len()
        )));
    }
    let errs = (0..end)
        .map(|i| case.reference.mask()[i].then(|| distance(&y[i], &case.reference.values()[i])))
        .collect();
    Ok(Some((cut, errs)))
}

/// Error at each step past the cut, given the first `given` observations of
/// every test trajectory.
pub fn error_vs_future_step(pred: &dyn Predictor, test: &Dataset, grid: &TimeGrid, given: usize) -> Result<ErrorCurve> {
    let mut per_step: Vec<Vec<f64>> = Vec::new();
    let mut skipped = 0;
    for case in cases(test, grid)? {
        let Some((cut, errs)) = case_errors(pred, &case, given)? else {
            skipped += 1;
            continue;
        };
        for (j, e) in errs[cut..].iter().enumerate() {
            if let Some(e) = e {
                if per_step.len() <= j {
                    per_step.resize(j + 1, Vec::new());
                }
                per_step[j].push(*e);
            }
        }
    }
    if skipped > 0 {
        log::warn!("{}: {skipped} trajectories too short for {given} given observations", pred.tag());
    }
    let points = per_step
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_empty())
        .map(|(x, v)| {
            let (mean, std) = mean_std(v);
            CurvePoint { x, mean, std, n: v.len() }
        })
        .collect();
    Ok(ErrorCurve {
        abscissa: Abscissa::FutureStep,
        points,
        skipped,
    })
}

/// For each `given` count, the mean over trajectories of the mean per-step
/// error within `scope`.
pub fn error_vs_given(
    pred: &dyn Predictor,
    test: &Dataset,
    grid: &TimeGrid,
    givens: &[usize],
    scope: ErrorScope,
) -> Result<ErrorCurve> {
    let cases = cases(test, grid)?;
    let mut points = Vec::with_capacity(givens.len());
    let mut skipped = 0;
    for &given in givens {
        let mut per_traj = Vec::with_capacity(cases.len());
        for case in &cases {
            let Some((cut, errs)) = case_errors(pred, case, given)? else {
                skipped += 1;
                continue;
            };
            let start = match scope {
                ErrorScope::Future => cut,
                ErrorScope::Whole => 0,
            };
            let used: Vec<f64> = errs[start..].iter().flatten().copied().collect();
            if !used.is_empty() {
                per_traj.push(used.iter().sum::<f64>() / used.len() as f64);
            }
        }
        if per_traj.is_empty() {
            log::warn!("{}: no trajectory long enough for {given} given observations", pred.tag());
            continue;
        }
        let (mean, std) = mean_std(&per_traj);
        points.push(CurvePoint {
            x: given,
            mean,
            std,
            n: per_traj.len(),
        });
    }
    if skipped > 0 {
        log::warn!("{}: {skipped} (trajectory, given) pairs skipped as too short", pred.tag());
    }
    Ok(ErrorCurve {
        abscissa: Abscissa::Given,
        points,
        skipped,
    })
}

/// 5, 10, …, 200.
pub fn default_givens() -> Vec<usize> {
    (1..=40).map(|i| 5 * i).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ballsim::{synth_dataset, PhysicsParams, SynthConfig};
    use crate::trajkit::Record;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn sim(noise: f64, count: usize, seed: u64) -> Dataset {
        let cfg = SynthConfig {
            train: 0,
            test: count,
            noise_std: noise,
            seed,
            ..Default::default()
        };
        synth_dataset(&cfg).unwrap()
    }

    /// Looks the trajectory up by its first observed value and returns the truth.
    fn oracle(ds: &Dataset) -> FnPredictor<impl Fn(&MaskedTrajectory) -> Result<Vec<Point3>>> {
        let grid = TimeGrid::ball();
        let table: HashMap<[u64; 3], Vec<Point3>> = ds
            .split(Split::Test)
            .map(|r| {
                let key = r.traj.positions()[0].map(f64::to_bits);
                let mut truth = r.reference().to_vec();
                truth.resize(grid.steps(), [0.0; 3]);
                (key, truth)
            })
            .collect();
        FnPredictor {
            tag: "oracle".into(),
            f: move |p: &MaskedTrajectory| Ok(table[&p.values()[0].map(f64::to_bits)].clone()),
        }
    }

    #[test]
    fn oracle_curves_are_zero() {
        let ds = sim(0.01, 12, 1);
        let o = oracle(&ds);
        let grid = TimeGrid::ball();
        let c = error_vs_future_step(&o, &ds, &grid, 30).unwrap();
        assert!(!c.points.is_empty());
        assert!(c.points.iter().all(|p| p.mean == 0.0 && p.std == 0.0));
        let g = error_vs_given(&o, &ds, &grid, &[5, 30, 100], ErrorScope::Future).unwrap();
        assert_eq!(g.points.len(), 3);
        assert!(g.points.iter().all(|p| p.mean == 0.0));
    }

    #[test]
    fn physics_on_its_own_noiseless_simulation() {
        // the launch fit matches ballistic flight exactly without drag
        let physics = PhysicsParams {
            drag_coeff: 0.0,
            ..Default::default()
        };
        let cfg = SynthConfig {
            train: 0,
            test: 20,
            noise_std: 0.0,
            physics,
            seed: 2,
            ..Default::default()
        };
        let ds = synth_dataset(&cfg).unwrap();
        let p = PhysicsPredictor::new(physics, TimeGrid::ball());
        let c = error_vs_future_step(&p, &ds, &TimeGrid::ball(), 30).unwrap();
        assert!(c.points.iter().all(|pt| pt.mean < 1e-3), "{:?}", c.points.iter().map(|p| p.mean).fold(0.0, f64::max));
    }

    #[test]
    fn short_trajectories_are_counted_not_dropped_silently() {
        let ds = sim(0.01, 10, 3);
        let o = oracle(&ds);
        let longest = ds.records().iter().map(|r| r.traj.len()).max().unwrap();
        let c = error_vs_future_step(&o, &ds, &TimeGrid::ball(), longest).unwrap();
        assert_eq!(c.skipped, 10);
        assert!(c.points.is_empty());
        let g = error_vs_given(&o, &ds, &TimeGrid::ball(), &[5, longest], ErrorScope::Whole).unwrap();
        assert_eq!(g.skipped, 10);
        assert_eq!(g.points.len(), 1);
    }

    #[test]
    fn error_is_euclidean_against_reference() {
        let ds = sim(0.0, 4, 4);
        let offset = FnPredictor {
            tag: "shifted".into(),
            f: {
                let o = oracle(&ds);
                move |p: &MaskedTrajectory| Ok(o.predict(p)?.iter().map(|q| [q[0] + 0.03, q[1] - 0.04, q[2]]).collect())
            },
        };
        let c = error_vs_future_step(&offset, &ds, &TimeGrid::ball(), 10).unwrap();
        assert!(c.points.iter().all(|p| (p.mean - 0.05).abs() < 1e-12));
    }

    #[test]
    fn plateau_onset() {
        let curve = |ys: &[f64]| ErrorCurve {
            abscissa: Abscissa::Given,
            points: ys.iter().enumerate().map(|(i, &mean)| CurvePoint { x: 10 * i, mean, std: 0.0, n: 1 }).collect(),
            skipped: 0,
        };
        assert_eq!(curve(&[1.0, 0.5, 0.2, 0.1, 0.1, 0.105]).plateau_onset(0.1), Some(30));
        assert_eq!(curve(&[1.0, 0.5, 0.2, 0.1, 0.1, 0.08]).plateau_onset(0.1), Some(50));
        assert_eq!(curve(&[]).plateau_onset(0.1), None);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn csv_round_trip(pts in prop::collection::vec((0usize..500, 0.0f64..10.0, 0.0f64..3.0, 1usize..300), 0..40)) {
            let c = ErrorCurve {
                abscissa: Abscissa::FutureStep,
                points: pts.iter().map(|&(x, mean, std, n)| CurvePoint { x, mean, std, n }).collect(),
                skipped: 0,
            };
            let mut buf = Vec::new();
            c.write_csv(&mut buf).unwrap();
            prop_assert_eq!(ErrorCurve::read_csv(buf.as_slice()).unwrap(), c);
        }
    }

    #[test]
    fn aggregation_ignores_record_order() {
        let ds = sim(0.01, 12, 5);
        let p = PhysicsPredictor::new(PhysicsParams::default(), TimeGrid::ball());
        let mut reversed: Vec<Record> = ds.records().to_vec();
        reversed.reverse();
        let rev = Dataset::new(reversed).unwrap();
        let a = error_vs_given(&p, &ds, &TimeGrid::ball(), &[10, 40], ErrorScope::Whole).unwrap();
        let b = error_vs_given(&p, &rev, &TimeGrid::ball(), &[10, 40], ErrorScope::Whole).unwrap();
        assert_eq!(a, b);
    }
}
