use ndarray::{s, Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use super::model::{TvaeGradients, TvaeModel};
use crate::error::{Error, Result};
use crate::trajkit::{make_prefix, MaskedTrajectory};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// One training example: the full trajectory and the (possibly corrupted)
/// prefix the model conditions on. The prefix cut is the first step to predict.
#[derive(Clone, Copy, Debug)]
pub struct ElboItem<'a> {
    pub full: &'a MaskedTrajectory,
    pub prefix: &'a MaskedTrajectory,
}

/// The two parts of one example's loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboTerms {
    pub kl: f64,
    /// Negative log-likelihood of the observed future, averaged over samples.
    pub reconstruction: f64,
}

impl ElboTerms {
    pub fn loss(&self) -> f64 {
        self.kl + self.reconstruction
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ElboOptions {
    /// Treat the full-trajectory encoding as a constant inside the KL term.
    pub kl_stop_gradient: bool,
}

/// Standard-normal draws for `items × samples` latent codes, rows grouped by item.
pub fn draw_noise<R: Rng + ?Sized>(items: usize, samples: usize, latent: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((items * samples, latent), || rng.sample(StandardNormal))
}

/// Negative evidence lower bound for a batch with fixed noise, plus the gradient
/// of the summed loss with respect to every model tensor.
///
/// `noise` holds `samples` rows per item, in item order.
pub fn elbo_batch(
    m: &TvaeModel,
    items: &[ElboItem<'_>],
    noise: ArrayView2<f64>,
    opts: ElboOptions,
) -> Result<(Vec<ElboTerms>, TvaeGradients)> {
    let b = items.len();
    let k = m.latent_dim();
    let n = m.steps();
    if b == 0 {
        return Ok((Vec::new(), TvaeGradients::zeros_like(m)));
    }
    if noise.ncols() != k || noise.nrows() == 0 || !noise.nrows().is_multiple_of(b) {
        return Err(Error::Shape(format!(
            "noise is {:?}, expected (samples × {b}, {k})",
            noise.dim()
        )));
    }
    let l = noise.nrows() / b;
    let inv_l = 1.0 / l as f64;

    let encoder_rows: Vec<&MaskedTrajectory> = items.iter().map(|it| it.full).chain(items.iter().map(|it| it.prefix)).collect();
    let enc_in = m.encoder_inputs(&encoder_rows)?;
    let (enc_out, enc_cache) = m.encoder.forward_batch(enc_in.view())?;
    let mu_q = enc_out.slice(s![..b, ..k]);
    let sd_q = enc_out.slice(s![..b, k..]);
    let mu_p = enc_out.slice(s![b.., ..k]);
    let sd_p = enc_out.slice(s![b.., k..]);

    let mut z = Array2::zeros((b * l, k));
    for r in 0..b * l {
        let i = r / l;
        for j in 0..k {
            z[[r, j]] = mu_q[[i, j]] + sd_q[[i, j]] * noise[[r, j]];
        }
    }
    let prefixes: Vec<&MaskedTrajectory> = items.iter().map(|it| it.prefix).collect();
    let dec_in = m.decoder_inputs(&z, &prefixes, l)?;
    let (dec_out, dec_cache) = m.decoder.forward_batch(dec_in.view())?;

    let inv_var = m.log_sigma_y.map(|s| (-2.0 * s).exp());
    let mut terms = Vec::with_capacity(b);
    let mut d_out = Array2::zeros(dec_out.dim());
    let mut d_log_sigma = [0.0; 3];
    for (i, it) in items.iter().enumerate() {
        let cut = it.prefix.cut();
        let mut nll = 0.0;
        for step in cut..n {
            if !it.full.mask()[step] {
                continue;
            }
            let y = m.standardizer.forward(&it.full.values()[step]);
            for r in i * l..(i + 1) * l {
                for c in 0..3 {
                    let res = y[c] - dec_out[[r, 3 * step + c]];
                    let q = res * res * inv_var[c];
                    nll += 0.5 * q + m.log_sigma_y[c] + HALF_LN_2PI;
                    d_out[[r, 3 * step + c]] = -res * inv_var[c] * inv_l;
                    d_log_sigma[c] += (1.0 - q) * inv_l;
                }
            }
        }
        terms.push(ElboTerms {
            kl: 0.0,
            reconstruction: nll * inv_l,
        });
    }

    let (dec_grads, dec_in_grad) = m.decoder.backward_batch(&dec_cache, d_out.view())?;

    let mut d_enc = Array2::zeros((2 * b, 2 * k));
    for r in 0..b * l {
        let i = r / l;
        for j in 0..k {
            let dz = dec_in_grad[[r, j]];
            d_enc[[i, j]] += dz;
            d_enc[[i, k + j]] += dz * noise[[r, j]];
        }
    }
    for (i, t) in terms.iter_mut().enumerate() {
        let mut kl = 0.0;
        for j in 0..k {
            let (mq, sq, mp, sp) = (mu_q[[i, j]], sd_q[[i, j]], mu_p[[i, j]], sd_p[[i, j]]);
            let d = mq - mp;
            let vp = sp * sp;
            kl += (sp / sq).ln() + (sq * sq + d * d) / (2.0 * vp) - 0.5;
            if !opts.kl_stop_gradient {
                d_enc[[i, j]] += d / vp;
                d_enc[[i, k + j]] += -1.0 / sq + sq / vp;
            }
            d_enc[[b + i, j]] += -d / vp;
            d_enc[[b + i, k + j]] += 1.0 / sp - (sq * sq + d * d) / (vp * sp);
        }
        t.kl = kl;
        if !t.loss().is_finite() {
            return Err(Error::NonFiniteLoss);
        }
    }
    let (enc_grads, _) = m.encoder.backward_batch(&enc_cache, d_enc.view())?;

    Ok((
        terms,
        TvaeGradients {
            encoder: enc_grads,
            decoder: dec_grads,
            log_sigma_y: d_log_sigma,
        },
    ))
}

/// Loss and gradients for one trajectory cut at `t_cut`, with `samples` fresh
/// Monte-Carlo draws.
pub fn elbo<R: Rng + ?Sized>(
    m: &TvaeModel,
    full: &MaskedTrajectory,
    t_cut: usize,
    samples: usize,
    rng: &mut R,
) -> Result<(f64, TvaeGradients)> {
    if samples == 0 {
        return Err(Error::Config("at least one Monte-Carlo sample is required".into()));
    }
    m.check_grid(full)?;
    let prefix = make_prefix(full, t_cut)?;
    let noise = draw_noise(1, samples, m.latent_dim(), rng);
    let (terms, grads) = elbo_batch(m, &[ElboItem { full, prefix: &prefix }], noise.view(), ElboOptions::default())?;
    Ok((terms[0].loss(), grads))
}
