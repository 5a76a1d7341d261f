use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::elbo::{draw_noise, elbo_batch, ElboItem, ElboOptions, ElboTerms};
use super::model::{Architecture, Standardizer, TvaeModel};
use crate::error::{Error, Result};
use crate::neuralkit::{AdamState, OptimizerKind};
use crate::trajkit::{
    corrupt, make_prefix, resample_full, window_sample, Aabb, Dataset, MaskedTrajectory, Split, TimeGrid,
};

pub const DEFAULT_LATENT_GRID: [usize; 4] = [16, 32, 64, 128];
pub const DEFAULT_HIDDEN_GRID: [usize; 4] = [64, 128, 256, 512];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Monte-Carlo latent draws per example.
    pub mc_samples: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub p_miss: f64,
    pub p_outlier: f64,
    pub hidden: usize,
    pub latent: usize,
    pub ci: bool,
    pub kl_stop_gradient: bool,
    /// Share of training trajectories held out when the dataset has no
    /// validation split.
    pub validation_fraction: f64,
    pub grid: TimeGrid,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 64,
            mc_samples: 1,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            p_miss: 0.05,
            p_outlier: 0.01,
            hidden: 256,
            latent: 64,
            ci: false,
            kl_stop_gradient: false,
            validation_fraction: 0.1,
            grid: TimeGrid::ball(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 || self.mc_samples == 0 || self.hidden == 0 || self.latent == 0 {
            return bad("batch, samples, hidden and latent sizes must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        for (name, p) in [("p_miss", self.p_miss), ("p_outlier", self.p_outlier)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad(format!("validation fraction must lie in [0, 1), got {}", self.validation_fraction));
        }
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            latent: self.latent,
            hidden: self.hidden,
            ci: self.ci,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss per example over the epoch, before each update.
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters at the epoch with the lowest validation loss.
    pub model: TvaeModel,
    pub history: Vec<EpochRecord>,
    /// 1-based; 0 when no epoch ran.
    pub best_epoch: usize,
}

impl TrainOutcome {
    pub fn best_val_loss(&self) -> f64 {
        self.history
            .iter()
            .find(|r| r.epoch == self.best_epoch)
            .map_or(f64::INFINITY, |r| r.val_loss)
    }
}

/// Train and validation trajectories, each resampled onto its own grid.
fn prepare(ds: &Dataset, cfg: &TrainConfig) -> Result<(Vec<MaskedTrajectory>, Vec<MaskedTrajectory>)> {
    let dt = cfg.grid.dt();
    let train: Vec<MaskedTrajectory> = ds
        .split(Split::Train)
        .map(|r| resample_full(&r.traj, dt))
        .collect::<Result<_>>()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset("no training trajectories"));
    }
    let val: Vec<MaskedTrajectory> = ds
        .split(Split::Val)
        .map(|r| resample_full(&r.traj, dt))
        .collect::<Result<_>>()?;
    if !val.is_empty() {
        return Ok((train, val));
    }
    let held = (train.len() as f64 * cfg.validation_fraction).ceil() as usize;
    if held == 0 || held >= train.len() {
        // too few trajectories to hold any out; select on the training set itself
        return Ok((train.clone(), train));
    }
    let mut train = train;
    let val = train.split_off(train.len() - held);
    Ok((train, val))
}

/// Training-time view of one trajectory: a grid-length window, a uniform cut
/// in `0..=min(T, N)` and a corrupted prefix.
fn draw_example<R: Rng + ?Sized>(
    source: &MaskedTrajectory,
    steps: usize,
    corruption: Option<(f64, f64, &Aabb)>,
    rng: &mut R,
) -> Result<(MaskedTrajectory, MaskedTrajectory)> {
    let full = window_sample(source, steps, rng);
    let end = full.observed_end().min(steps);
    let cut = rng.random_range(0..=end);
    let prefix = make_prefix(&full, cut)?;
    let prefix = match corruption {
        Some((p_miss, p_outlier, domain)) => corrupt(&prefix, p_miss, p_outlier, domain, rng),
        None => prefix,
    };
    Ok((full, prefix))
}

fn mean_loss(terms: &[ElboTerms]) -> f64 {
    terms.iter().map(ElboTerms::loss).sum::<f64>()
}

/// Mean loss over a fixed draw of windows, cuts and noise.
fn validation_loss(m: &TvaeModel, val: &[MaskedTrajectory], cfg: &TrainConfig, opts: ElboOptions) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut total = 0.0;
    for chunk in val.chunks(cfg.batch_size) {
        let pairs: Vec<_> = chunk
            .iter()
            .map(|s| draw_example(s, m.steps(), None, &mut rng))
            .collect::<Result<_>>()?;
        let items: Vec<ElboItem> = pairs.iter().map(|(full, prefix)| ElboItem { full, prefix }).collect();
        let noise = draw_noise(items.len(), cfg.mc_samples, m.latent_dim(), &mut rng);
        total += mean_loss(&elbo_batch(m, &items, noise.view(), opts)?.0);
    }
    Ok(total / val.len() as f64)
}

/// Fit a model by stochastic optimization of the evidence lower bound.
///
/// Deterministic for a given config. The returned parameters are those with
/// the lowest validation loss seen after any epoch.
pub fn train(ds: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (train, val) = prepare(ds, cfg)?;
    let standardizer = Standardizer::fit(&train)?;
    let domain = Aabb::around(train.iter().flat_map(|m| m.values().iter().zip(m.mask()).filter(|(_, &on)| on).map(|(p, _)| p)))
        .ok_or(Error::EmptyDataset("no observed positions"))?
        .inflate(0.1);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = TvaeModel::new(cfg.architecture(), cfg.grid, standardizer, &mut rng)?;
    let mut opt = match cfg.optimizer {
        OptimizerKind::Adam => AdamState::new(cfg.learning_rate),
        OptimizerKind::Sgd => AdamState::sgd(cfg.learning_rate),
    };
    let opts = ElboOptions {
        kl_stop_gradient: cfg.kl_stop_gradient,
    };
    let steps = cfg.grid.steps();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::INFINITY, 0usize, model.clone());

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let pairs: Vec<_> = batch
                .iter()
                .map(|&i| draw_example(&train[i], steps, Some((cfg.p_miss, cfg.p_outlier, &domain)), &mut rng))
                .collect::<Result<_>>()?;
            let items: Vec<ElboItem> = pairs.iter().map(|(full, prefix)| ElboItem { full, prefix }).collect();
            let noise = draw_noise(items.len(), cfg.mc_samples, model.latent_dim(), &mut rng);
            let (terms, mut grads) = elbo_batch(&model, &items, noise.view(), opts)?;
            total += mean_loss(&terms);
            grads.scale(1.0 / items.len() as f64);
            opt.update(&mut model, &grads)?;
        }
        let train_loss = total / train.len() as f64;
        let val_loss = validation_loss(&model, &val, cfg, opts)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        log::debug!("epoch {epoch}: train {train_loss:.4} val {val_loss:.4}");
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best.0 {
            best = (val_loss, epoch, model.clone());
        }
    }
    Ok(TrainOutcome {
        model: best.2,
        history,
        best_epoch: best.1,
    })
}

pub fn write_history<W: Write + ?Sized>(w: &mut W, history: &[EpochRecord]) -> Result<()> {
    writeln!(w, "epoch,train_loss,val_loss")?;
    for r in history {
        writeln!(w, "{},{},{}", r.epoch, r.train_loss, r.val_loss)?;
    }
    Ok(())
}

pub fn read_history<R: BufRead>(r: R) -> Result<Vec<EpochRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: i + 1, message };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(parse_err(format!("expected 3 fields, found {}", fields.len())));
        }
        out.push(EpochRecord {
            epoch: fields[0].parse().map_err(|_| parse_err("bad epoch".into()))?,
            train_loss: fields[1].parse().map_err(|_| parse_err("bad train loss".into()))?,
            val_loss: fields[2].parse().map_err(|_| parse_err("bad validation loss".into()))?,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchRow {
    pub latent: usize,
    pub hidden: usize,
    pub val_loss: f64,
    pub best_epoch: usize,
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub best: TrainConfig,
    pub best_model: TvaeModel,
    pub table: Vec<SearchRow>,
}

/// Train one model per (latent, hidden) pair and keep the one with the lowest
/// validation loss. Ties go to the earlier row.
pub fn hyper_search(ds: &Dataset, base: &TrainConfig, latents: &[usize], hiddens: &[usize]) -> Result<SearchResult> {
    if latents.is_empty() || hiddens.is_empty() {
        return Err(Error::Config("search grid is empty".into()));
    }
    let mut table = Vec::with_capacity(latents.len() * hiddens.len());
    let mut best: Option<(TrainConfig, TvaeModel, f64)> = None;
    for &latent in latents {
        for &hidden in hiddens {
            let cfg = TrainConfig { latent, hidden, ..*base };
            let out = train(ds, &cfg)?;
            let val_loss = out.best_val_loss();
            log::info!("search latent={latent} hidden={hidden}: validation loss {val_loss:.4}");
            table.push(SearchRow {
                latent,
                hidden,
                val_loss,
                best_epoch: out.best_epoch,
            });
            if best.as_ref().is_none_or(|b| val_loss < b.2) {
                best = Some((cfg, out.model, val_loss));
            }
        }
    }
    let (best, best_model, _) = best.expect("grid is nonempty");
    Ok(SearchResult { best, best_model, table })
}
