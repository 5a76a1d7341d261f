use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use tvae_core::ballsim::{synth_dataset, PhysicsPredictor, SynthConfig};
use tvae_core::evalkit::{
    ablation_ci, default_givens, error_vs_future_step, error_vs_given, latency_bench, ErrorCurve, ErrorScope, Predictor,
    TvaePredictor,
};
use tvae_core::trajkit::{
    make_prefix, read_dataset, resample_to_grid, snap_to_grid, write_dataset, Point3, Split, TimeGrid,
};
use tvae_core::tvae::{
    ensemble_moments, hyper_search, predict_ensemble_scaled, train, write_history, Architecture, Standardizer,
    TrainConfig, TvaeModel, DEFAULT_HIDDEN_GRID, DEFAULT_LATENT_GRID,
};
use tvae_core::{Error, Result};

use crate::args::{
    AblateArgs, BenchArgs, EvaluateArgs, PredictArgs, Scope, SearchArgs, SimulateArgs, TrainArgs, TrainingArgs,
};
use crate::settings::Settings;

/// Prefix samples must sit within this fraction of a step of a model grid point.
pub const GRID_TOLERANCE: f64 = 0.25;
/// Relative slack when locating where an error-vs-given curve levels off.
pub const PLATEAU_TOL: f64 = 0.05;
pub const DEFAULT_ENSEMBLE: usize = 30;

fn report(s: &Settings) {
    println!("# resolved config");
    print!("{}", s.resolved_text());
}

/// `path` with `suffix` appended to its file name.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = OsString::from(path.as_os_str());
    name.push(suffix);
    PathBuf::from(name)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn train_config(s: &mut Settings, t: &TrainingArgs, mc_samples: Option<usize>, seed: u64) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        latent: s.value("k", t.model.k, d.latent)?,
        hidden: s.value("hidden", t.model.hidden, d.hidden)?,
        ci: s.value("ci", t.model.ci(), d.ci)?,
        epochs: s.value("epochs", t.epochs, d.epochs)?,
        batch_size: s.value("batch", t.batch, d.batch_size)?,
        learning_rate: s.value("lr", t.lr, d.learning_rate)?,
        p_miss: s.value("p_miss", t.p_miss, d.p_miss)?,
        p_outlier: s.value("p_outlier", t.p_outlier, d.p_outlier)?,
        kl_stop_gradient: s.value("kl_stop_gradient", t.kl_stop_gradient.then_some(true), d.kl_stop_gradient)?,
        mc_samples: s.value("mc_samples", mc_samples, d.mc_samples)?,
        seed,
        ..d
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn simulate(a: &SimulateArgs, s: &mut Settings, seed: u64) -> Result<()> {
    let count = s.value("count", a.count, 2200usize)?;
    let noise_std = s.value("noise_std", a.noise_std, 0.01)?;
    let physics = s.physics(&a.physics)?;
    report(s);
    let cfg = SynthConfig {
        noise_std,
        physics,
        seed,
        ..SynthConfig::with_count(count)
    };
    let ds = synth_dataset(&cfg)?;
    write_dataset(&a.out, &ds)?;
    println!(
        "wrote {} train / {} test trajectories to {}",
        ds.count(Split::Train),
        ds.count(Split::Test),
        a.out.display()
    );
    Ok(())
}

pub fn train_cmd(a: &TrainArgs, s: &mut Settings, seed: u64) -> Result<()> {
    let cfg = train_config(s, &a.training, a.samples, seed)?;
    report(s);
    let ds = read_dataset(&a.data)?;
    let out = train(&ds, &cfg)?;
    out.model.save(&a.out)?;
    let history = sibling(&a.out, ".history.csv");
    let mut w = create(&history)?;
    write_history(&mut w, &out.history)?;
    w.flush()?;
    println!(
        "best epoch {} (validation loss {:.4}); model {}, history {}",
        out.best_epoch,
        out.best_val_loss(),
        a.out.display(),
        history.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct PredictionLine<'a> {
    id: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    sample: Option<usize>,
    t: &'a [f64],
    pos: &'a [Point3],
    split: Split,
    /// Grid steps covered by the given prefix.
    cut: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    cov: Option<&'a [[[f64; 3]; 3]]>,
}

pub fn predict(a: &PredictArgs, s: &mut Settings, seed: u64) -> Result<()> {
    let samples = s.value("samples", a.samples, DEFAULT_ENSEMBLE)?;
    let moments = s.value("moments", a.moments.then_some(true), false)?;
    let zero_sigma = s.value("zero_sigma", a.zero_sigma.then_some(true), false)?;
    report(s);
    if samples == 0 || (moments && samples < 2) {
        return Err(Error::Config(format!(
            "--samples {samples} is too small{}",
            if moments { " for --moments (need ≥ 2)" } else { "" }
        )));
    }
    let model = TvaeModel::load(&a.model)?;
    let ds = read_dataset(&a.data)?;
    let mut w = create(&a.out)?;
    for rec in ds.records() {
        let grid = model.grid().anchored_at(rec.traj.start_time());
        let prefix = snap_to_grid(&rec.traj, &grid, GRID_TOLERANCE)
            .map_err(|e| match e {
                Error::GridMismatch(m) => Error::GridMismatch(format!("trajectory {}: {m}", rec.traj.id())),
                other => other,
            })?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(rec.traj.id());
        let scale = if zero_sigma { 0.0 } else { 1.0 };
        let ens = predict_ensemble_scaled(&model, &prefix, samples, scale, &mut rng)?;
        let t: Vec<f64> = (0..grid.steps()).map(|i| grid.time_at(i)).collect();
        let line = |sample, pos, cov| PredictionLine {
            id: rec.traj.id(),
            sample,
            t: &t,
            pos,
            split: rec.split,
            cut: prefix.cut(),
            cov,
        };
        if moments {
            let m = ensemble_moments(&ens)?;
            writeln!(w, "{}", to_json(&line(None, &m.mean, Some(&m.cov)))?)?;
        } else {
            for (i, path) in ens.samples.iter().enumerate() {
                writeln!(w, "{}", to_json(&line(Some(i), path, None))?)?;
            }
        }
    }
    w.flush()?;
    println!("wrote predictions for {} trajectories to {}", ds.len(), a.out.display());
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::Io(e.into()))
}

fn write_curve(curve: &ErrorCurve, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    curve.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn evaluate(a: &EvaluateArgs, s: &mut Settings, seed: u64) -> Result<()> {
    let given = s.optional("given", a.given)?;
    let scope_flag = a.scope.map(|sc| match sc {
        Scope::Future => "future".to_string(),
        Scope::Whole => "whole".to_string(),
    });
    let scope = match s.value("scope", scope_flag, "whole".to_string())?.as_str() {
        "future" => ErrorScope::Future,
        "whole" => ErrorScope::Whole,
        other => return Err(Error::Config(format!("scope = {other}: expected future or whole"))),
    };
    let (pred, grid): (Box<dyn Predictor>, TimeGrid) = match &a.model {
        Some(path) => {
            let samples = s.value("samples", a.samples, DEFAULT_ENSEMBLE)?;
            report(s);
            let model = TvaeModel::load(path)?;
            let grid = *model.grid();
            (Box::new(TvaePredictor::new(model, samples, seed)), grid)
        }
        None => {
            let physics = s.physics(&a.physics)?;
            report(s);
            let grid = TimeGrid::ball();
            (Box::new(PhysicsPredictor::new(physics, grid)), grid)
        }
    };
    let test = read_dataset(&a.data)?;
    let curve = match given {
        Some(g) => error_vs_future_step(pred.as_ref(), &test, &grid, g)?,
        None => error_vs_given(pred.as_ref(), &test, &grid, &default_givens(), scope)?,
    };
    write_curve(&curve, &a.out)?;
    println!("{}: mean error {:.4} m over {} points", pred.tag(), curve.overall_mean(), curve.points.len());
    if given.is_none() {
        match curve.plateau_onset(PLATEAU_TOL) {
            Some(x) => println!("plateau from {x} given observations"),
            None => println!("no plateau"),
        }
    }
    if curve.skipped > 0 {
        println!("skipped {} cases as too short", curve.skipped);
    }
    Ok(())
}

pub fn ablate(a: &AblateArgs, s: &mut Settings, seed: u64) -> Result<()> {
    let cfg = train_config(s, &a.training, None, seed)?;
    let samples = s.value("samples", a.samples, DEFAULT_ENSEMBLE)?;
    report(s);
    let ds = read_dataset(&a.data)?;
    let ab = ablation_ci(&ds, &cfg, samples)?;
    write_curve(&ab.ci, &sibling(&a.out, ".ci.csv"))?;
    write_curve(&ab.full, &sibling(&a.out, ".full.csv"))?;
    let (ci, full) = ab.means();
    println!("mean future error: CI {ci:.4} m, full {full:.4} m");
    println!("CI not worse than full: {}", ab.ci_not_worse());
    Ok(())
}

pub fn search(a: &SearchArgs, s: &mut Settings, seed: u64) -> Result<()> {
    let cfg = train_config(s, &a.training, None, seed)?;
    let latents = s.list("latents", a.latents.clone(), &DEFAULT_LATENT_GRID)?;
    let hiddens = s.list("hiddens", a.hiddens.clone(), &DEFAULT_HIDDEN_GRID)?;
    report(s);
    let ds = read_dataset(&a.data)?;
    let res = hyper_search(&ds, &cfg, &latents, &hiddens)?;
    res.best_model.save(&a.out)?;
    let table = sibling(&a.out, ".search.csv");
    let mut w = create(&table)?;
    writeln!(w, "latent,hidden,val_loss,best_epoch")?;
    for r in &res.table {
        writeln!(w, "{},{},{},{}", r.latent, r.hidden, r.val_loss, r.best_epoch)?;
    }
    w.flush()?;
    println!(
        "best latent {} hidden {}; model {}, table {}",
        res.best.latent,
        res.best.hidden,
        a.out.display(),
        table.display()
    );
    Ok(())
}

pub fn bench(a: &BenchArgs, s: &mut Settings, seed: u64) -> Result<()> {
    let samples = s.value("samples", a.samples, DEFAULT_ENSEMBLE)?;
    let reps = s.value("reps", a.reps, 100usize)?;
    let given = s.value("given", a.given, 30usize)?;
    let model = match &a.model {
        Some(path) => {
            report(s);
            TvaeModel::load(path)?
        }
        None => {
            let d = TrainConfig::default();
            let arch = Architecture {
                latent: s.value("k", a.model_size.k, d.latent)?,
                hidden: s.value("hidden", a.model_size.hidden, d.hidden)?,
                ci: s.value("ci", a.model_size.ci(), d.ci)?,
            };
            report(s);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            TvaeModel::new(arch, TimeGrid::ball(), Standardizer::default(), &mut rng)?
        }
    };
    let grid = *model.grid();
    let ds = synth_dataset(&SynthConfig {
        train: 1,
        test: 0,
        grid,
        seed,
        ..Default::default()
    })?;
    let traj = &ds.records()[0].traj;
    let full = resample_to_grid(traj, &grid.anchored_at(traj.start_time()));
    let cut = full
        .cut_after_observations(given)
        .ok_or(Error::OutOfRange { what: "given", value: given, max: full.observed_count() })?;
    let prefix = make_prefix(&full, cut)?;
    let r = latency_bench(&model, &prefix, samples, reps, seed)?;
    println!(
        "latency over {} reps with {} samples: median {:.3} ms, p95 {:.3} ms, max {:.3} ms",
        r.reps, r.samples, r.median_ms, r.p95_ms, r.max_ms
    );
    Ok(())
}
