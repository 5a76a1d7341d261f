use ndarray::Array2;
use rand::Rng;

use super::elbo::draw_noise;
use super::model::TvaeModel;
use crate::error::{Error, Result};
use crate::trajkit::{MaskedTrajectory, Point3};

/// Sampled futures for one prefix.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionEnsemble {
    /// `L` trajectories, each covering the full grid, in meters.
    pub samples: Vec<Vec<Point3>>,
    pub cut: usize,
    pub latents: Vec<Vec<f64>>,
}

impl PredictionEnsemble {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Per-step sample mean; defined for any non-empty ensemble.
    pub fn mean(&self) -> Vec<Point3> {
        let l = self.samples.len() as f64;
        let n = self.samples.first().map_or(0, Vec::len);
        (0..n)
            .map(|i| {
                let mut acc = [0.0; 3];
                for s in &self.samples {
                    for c in 0..3 {
                        acc[c] += s[i][c];
                    }
                }
                acc.map(|a| a / l)
            })
            .collect()
    }
}

/// Encode once, draw `samples` latent codes and decode them all.
pub fn predict_ensemble<R: Rng + ?Sized>(
    m: &TvaeModel,
    prefix: &MaskedTrajectory,
    samples: usize,
    rng: &mut R,
) -> Result<PredictionEnsemble> {
    predict_ensemble_scaled(m, prefix, samples, 1.0, rng)
}

/// As [`predict_ensemble`] with the latent std multiplied by `sigma_scale`;
/// a scale of zero decodes the latent mean for every sample.
pub fn predict_ensemble_scaled<R: Rng + ?Sized>(
    m: &TvaeModel,
    prefix: &MaskedTrajectory,
    samples: usize,
    sigma_scale: f64,
    rng: &mut R,
) -> Result<PredictionEnsemble> {
    if samples == 0 {
        return Err(Error::Config("ensemble needs at least one sample".into()));
    }
    let q = m.encode(prefix)?;
    let k = m.latent_dim();
    let eps = draw_noise(1, samples, k, rng);
    let mut z = Array2::zeros((samples, k));
    for r in 0..samples {
        for j in 0..k {
            z[[r, j]] = q.mean[j] + sigma_scale * q.std[j] * eps[[r, j]];
        }
    }
    let out = m.decode_standardized(&z, prefix)?;
    let samples: Vec<Vec<Point3>> = out.rows().into_iter().map(|r| m.unstandardize_row(r)).collect();
    if samples.iter().flatten().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteLoss);
    }
    Ok(PredictionEnsemble {
        samples,
        cut: prefix.cut(),
        latents: z.rows().into_iter().map(|r| r.to_vec()).collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleMoments {
    pub mean: Vec<Point3>,
    /// Unbiased sample covariance per step.
    pub cov: Vec<[[f64; 3]; 3]>,
}

pub fn ensemble_moments(e: &PredictionEnsemble) -> Result<EnsembleMoments> {
    let l = e.samples.len();
    if l < 2 {
        return Err(Error::NeedTwoSamples(l));
    }
    let mean = e.mean();
    let cov = mean
        .iter()
        .enumerate()
        .map(|(i, mu)| {
            let mut c = [[0.0; 3]; 3];
            for s in &e.samples {
                let d = [0, 1, 2].map(|a| s[i][a] - mu[a]);
                for a in 0..3 {
                    for b in a..3 {
                        c[a][b] += d[a] * d[b];
                    }
                }
            }
            for a in 0..3 {
                for b in a..3 {
                    c[a][b] /= (l - 1) as f64;
                    c[b][a] = c[a][b];
                }
            }
            c
        })
        .collect();
    Ok(EnsembleMoments { mean, cov })
}
