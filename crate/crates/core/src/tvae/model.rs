use std::io::{BufRead, Write};

use ndarray::{Array2, ArrayView1};
use rand::Rng;

use crate::error::{Error, Result};
use crate::neuralkit::io::{expect_entry, read_header_line};
use crate::neuralkit::{read_params, write_params, Activation, GradientBundle, MlpParams, TensorSet};
use crate::trajkit::{MaskedTrajectory, Point3, TimeGrid};

pub const MODEL_MAGIC: &str = "tvae-model v1";

/// Diagonal Gaussian over the latent code.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentGaussian {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl LatentGaussian {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::Shape(format!("latent mean has {} entries, std has {}", mean.len(), std.len())));
        }
        if let Some(&s) = std.iter().find(|s| !(**s > 0.0)) {
            return Err(Error::NonPositiveSigma(s));
        }
        Ok(LatentGaussian { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn from_row(row: ArrayView1<f64>, k: usize) -> Self {
        LatentGaussian {
            mean: row.iter().take(k).copied().collect(),
            std: row.iter().skip(k).copied().collect(),
        }
    }
}

/// `KL(q ‖ p)` between diagonal Gaussians, in nats.
pub fn gaussian_kl(q: &LatentGaussian, p: &LatentGaussian) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(Error::Shape(format!("KL between latents of size {} and {}", q.dim(), p.dim())));
    }
    let mut kl = 0.0;
    for k in 0..q.dim() {
        let (mq, sq, mp, sp) = (q.mean[k], q.std[k], p.mean[k], p.std[k]);
        if !(sq > 0.0) {
            return Err(Error::NonPositiveSigma(sq));
        }
        if !(sp > 0.0) {
            return Err(Error::NonPositiveSigma(sp));
        }
        let d = mq - mp;
        kl += (sp / sq).ln() + (sq * sq + d * d) / (2.0 * sp * sp) - 0.5;
    }
    Ok(kl)
}

/// Per-coordinate affine map between meters and model units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Point3,
    pub std: Point3,
}

impl Default for Standardizer {
    fn default() -> Self {
        Standardizer {
            mean: [0.0; 3],
            std: [1.0; 3],
        }
    }
}

impl Standardizer {
    /// Mean and population std of all observed positions. A coordinate with no
    /// spread keeps unit scale.
    pub fn fit<'a>(trajectories: impl IntoIterator<Item = &'a MaskedTrajectory>) -> Result<Self> {
        let mut n = 0usize;
        let mut sum = [0.0; 3];
        let mut sq = [0.0; 3];
        for m in trajectories {
            for (p, _) in m.values().iter().zip(m.mask()).filter(|(_, &on)| on) {
                n += 1;
                for c in 0..3 {
                    sum[c] += p[c];
                    sq[c] += p[c] * p[c];
                }
            }
        }
        if n == 0 {
            return Err(Error::EmptyDataset("no observed positions to standardize"));
        }
        let mean = sum.map(|s| s / n as f64);
        let mut std = [1.0; 3];
        for c in 0..3 {
            let var = (sq[c] / n as f64 - mean[c] * mean[c]).max(0.0);
            if var.sqrt() > 1e-9 {
                std[c] = var.sqrt();
            }
        }
        Ok(Standardizer { mean, std })
    }

    pub fn forward(&self, p: &Point3) -> Point3 {
        [0, 1, 2].map(|c| (p[c] - self.mean[c]) / self.std[c])
    }

    pub fn inverse(&self, p: &Point3) -> Point3 {
        [0, 1, 2].map(|c| p[c] * self.std[c] + self.mean[c])
    }
}

/// Network sizes of a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub latent: usize,
    pub hidden: usize,
    pub ci: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TvaeModel {
    pub encoder: MlpParams,
    pub decoder: MlpParams,
    /// Log std of the observation noise per coordinate, in standardized units.
    pub log_sigma_y: [f64; 3],
    ci: bool,
    grid: TimeGrid,
    latent: usize,
    pub standardizer: Standardizer,
}

impl TvaeModel {
    pub fn new<R: Rng + ?Sized>(arch: Architecture, grid: TimeGrid, standardizer: Standardizer, rng: &mut R) -> Result<Self> {
        Self::check_arch(arch)?;
        let n = grid.steps();
        let encoder = MlpParams::two_layer(4 * n, arch.hidden, 2 * arch.latent, Activation::SoftplusTail { from: arch.latent }, rng);
        let decoder = MlpParams::two_layer(Self::decoder_input(arch, n), arch.hidden, 3 * n, Activation::Identity, rng);
        Ok(TvaeModel {
            encoder,
            decoder,
            log_sigma_y: [0.0; 3],
            ci: arch.ci,
            grid,
            latent: arch.latent,
            standardizer,
        })
    }

    /// All weights and biases zero.
    pub fn zeros(arch: Architecture, grid: TimeGrid) -> Result<Self> {
        Self::check_arch(arch)?;
        let n = grid.steps();
        Ok(TvaeModel {
            encoder: MlpParams::two_layer_zeros(4 * n, arch.hidden, 2 * arch.latent, Activation::SoftplusTail { from: arch.latent }),
            decoder: MlpParams::two_layer_zeros(Self::decoder_input(arch, n), arch.hidden, 3 * n, Activation::Identity),
            log_sigma_y: [0.0; 3],
            ci: arch.ci,
            grid,
            latent: arch.latent,
            standardizer: Standardizer::default(),
        })
    }

    fn check_arch(arch: Architecture) -> Result<()> {
        if arch.latent == 0 || arch.hidden == 0 {
            return Err(Error::Config(format!(
                "latent ({}) and hidden ({}) sizes must be positive",
                arch.latent, arch.hidden
            )));
        }
        Ok(())
    }

    fn decoder_input(arch: Architecture, n: usize) -> usize {
        if arch.ci {
            arch.latent
        } else {
            arch.latent + 4 * n
        }
    }

    /// Assemble a model from parts, checking that every shape agrees.
    pub fn from_parts(
        encoder: MlpParams,
        decoder: MlpParams,
        log_sigma_y: [f64; 3],
        ci: bool,
        grid: TimeGrid,
        standardizer: Standardizer,
    ) -> Result<Self> {
        let n = grid.steps();
        if encoder.input_dim() != 4 * n || !encoder.output_dim().is_multiple_of(2) || encoder.output_dim() == 0 {
            return Err(Error::Shape(format!(
                "encoder maps {} -> {}, expected {} -> 2K",
                encoder.input_dim(),
                encoder.output_dim(),
                4 * n
            )));
        }
        let latent = encoder.output_dim() / 2;
        let arch = Architecture { latent, hidden: 1, ci };
        if decoder.input_dim() != Self::decoder_input(arch, n) || decoder.output_dim() != 3 * n {
            return Err(Error::Shape(format!(
                "decoder maps {} -> {}, expected {} -> {}",
                decoder.input_dim(),
                decoder.output_dim(),
                Self::decoder_input(arch, n),
                3 * n
            )));
        }
        if encoder.layers().last().map(|l| l.activation) != Some(Activation::SoftplusTail { from: latent }) {
            return Err(Error::Shape("encoder output must end in a softplus tail over the std half".into()));
        }
        Ok(TvaeModel {
            encoder,
            decoder,
            log_sigma_y,
            ci,
            grid,
            latent,
            standardizer,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent
    }

    pub fn hidden_dim(&self) -> usize {
        self.encoder.layers()[0].output_dim()
    }

    pub fn is_ci(&self) -> bool {
        self.ci
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            latent: self.latent,
            hidden: self.hidden_dim(),
            ci: self.ci,
        }
    }

    pub(crate) fn check_grid(&self, x: &MaskedTrajectory) -> Result<()> {
        if x.len() != self.steps() {
            return Err(Error::GridMismatch(format!(
                "trajectory has {} steps, model grid has {}",
                x.len(),
                self.steps()
            )));
        }
        Ok(())
    }

    /// Standardized values (zero where unobserved) followed by the 0/1 mask.
    pub(crate) fn write_masked_input(&self, x: &MaskedTrajectory, out: &mut [f64]) {
        let n = self.steps();
        for (i, (p, &on)) in x.values().iter().zip(x.mask()).enumerate() {
            if on {
                let s = self.standardizer.forward(p);
                out[3 * i..3 * i + 3].copy_from_slice(&s);
                out[3 * n + i] = 1.0;
            } else {
                out[3 * i..3 * i + 3].fill(0.0);
                out[3 * n + i] = 0.0;
            }
        }
    }

    pub(crate) fn encoder_inputs(&self, xs: &[&MaskedTrajectory]) -> Result<Array2<f64>> {
        let width = 4 * self.steps();
        let mut a = Array2::zeros((xs.len(), width));
        for (mut row, x) in a.rows_mut().into_iter().zip(xs) {
            self.check_grid(x)?;
            self.write_masked_input(x, row.as_slice_mut().expect("standard layout"));
        }
        Ok(a)
    }

    /// Decoder input rows: each latent code, followed by its prefix unless CI.
    /// Row `r` pairs with `prefixes[r / rows_per_prefix]`.
    pub(crate) fn decoder_inputs(
        &self,
        zs: &Array2<f64>,
        prefixes: &[&MaskedTrajectory],
        rows_per_prefix: usize,
    ) -> Result<Array2<f64>> {
        let k = self.latent;
        if zs.ncols() != k {
            return Err(Error::Shape(format!("latent code has {} entries, model expects {k}", zs.ncols())));
        }
        let width = self.decoder.input_dim();
        let mut a = Array2::zeros((zs.nrows(), width));
        for (r, mut row) in a.rows_mut().into_iter().enumerate() {
            let row = row.as_slice_mut().expect("standard layout");
            row[..k].copy_from_slice(zs.row(r).as_slice().expect("standard layout"));
            if !self.ci {
                let x = prefixes[r / rows_per_prefix];
                self.check_grid(x)?;
                self.write_masked_input(x, &mut row[k..]);
            }
        }
        Ok(a)
    }

    pub(crate) fn encode_batch(&self, xs: &[&MaskedTrajectory]) -> Result<Vec<LatentGaussian>> {
        let input = self.encoder_inputs(xs)?;
        let (out, _) = self.encoder.forward_batch(input.view())?;
        Ok(out.rows().into_iter().map(|r| LatentGaussian::from_row(r, self.latent)).collect())
    }

    /// One encoder pass over the masked trajectory.
    pub fn encode(&self, x: &MaskedTrajectory) -> Result<LatentGaussian> {
        Ok(self.encode_batch(&[x])?.pop().expect("one row"))
    }

    /// Raw decoder output rows in standardized units.
    pub(crate) fn decode_standardized(&self, zs: &Array2<f64>, prefix: &MaskedTrajectory) -> Result<Array2<f64>> {
        let input = self.decoder_inputs(zs, &[prefix], zs.nrows().max(1))?;
        Ok(self.decoder.forward_batch(input.view())?.0)
    }

    pub(crate) fn unstandardize_row(&self, row: ArrayView1<f64>) -> Vec<Point3> {
        row.as_slice()
            .expect("standard layout")
            .chunks_exact(3)
            .map(|c| self.standardizer.inverse(&[c[0], c[1], c[2]]))
            .collect()
    }

    /// Predicted positions on every grid step for latent code `z`, in meters.
    pub fn decode(&self, z: &[f64], x: &MaskedTrajectory) -> Result<Vec<Point3>> {
        if z.len() != self.latent {
            return Err(Error::Shape(format!("latent code has {} entries, model expects {}", z.len(), self.latent)));
        }
        let zs = Array2::from_shape_vec((1, z.len()), z.to_vec()).map_err(|e| Error::Shape(e.to_string()))?;
        let out = self.decode_standardized(&zs, x)?;
        Ok(self.unstandardize_row(out.row(0)))
    }

    pub fn is_finite(&self) -> bool {
        self.encoder.is_finite() && self.decoder.is_finite() && self.log_sigma_y.iter().all(|x| x.is_finite())
    }

    pub fn write<W: Write + ?Sized>(&self, w: &mut W) -> Result<()> {
        let triple = |p: &[f64; 3]| format!("{} {} {}", p[0], p[1], p[2]);
        writeln!(w, "{MODEL_MAGIC}")?;
        writeln!(w, "latent = {}", self.latent)?;
        writeln!(w, "steps = {}", self.steps())?;
        writeln!(w, "dt = {}", self.grid.dt())?;
        writeln!(w, "origin = {}", self.grid.origin())?;
        writeln!(w, "ci = {}", self.ci)?;
        writeln!(w, "position_mean = {}", triple(&self.standardizer.mean))?;
        writeln!(w, "position_std = {}", triple(&self.standardizer.std))?;
        writeln!(w, "log_sigma_y = {}", triple(&self.log_sigma_y))?;
        writeln!(w, "encoder:")?;
        write_params(w, &self.encoder)?;
        writeln!(w)?;
        writeln!(w, "decoder:")?;
        write_params(w, &self.decoder)?;
        writeln!(w)?;
        Ok(())
    }

    pub fn read<R: BufRead + ?Sized>(r: &mut R) -> Result<Self> {
        let bad = |m: String| Error::Manifest(m);
        let magic = read_header_line(r)?;
        if magic != MODEL_MAGIC {
            let shown: String = magic.chars().take(40).collect();
            return Err(bad(format!(
                "unsupported model manifest version `{}` (expected `{MODEL_MAGIC}`)",
                shown.escape_debug()
            )));
        }
        fn num<T: std::str::FromStr>(v: String, key: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Manifest(format!("`{key}` has invalid value `{v}`")))
        }
        fn triple(v: String, key: &str) -> Result<[f64; 3]> {
            let xs: Vec<f64> = v
                .split_whitespace()
                .map(|s| s.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Manifest(format!("`{key}` has invalid value `{v}`")))?;
            xs.try_into().map_err(|_| Error::Manifest(format!("`{key}` needs three numbers")))
        }
        let latent: usize = num(expect_entry(r, "latent")?, "latent")?;
        let steps: usize = num(expect_entry(r, "steps")?, "steps")?;
        let dt: f64 = num(expect_entry(r, "dt")?, "dt")?;
        let origin: f64 = num(expect_entry(r, "origin")?, "origin")?;
        let ci: bool = num(expect_entry(r, "ci")?, "ci")?;
        let mean = triple(expect_entry(r, "position_mean")?, "position_mean")?;
        let std = triple(expect_entry(r, "position_std")?, "position_std")?;
        let log_sigma_y = triple(expect_entry(r, "log_sigma_y")?, "log_sigma_y")?;
        let grid = TimeGrid::new(dt, steps, origin).map_err(|e| bad(e.to_string()))?;
        if read_header_line(r)? != "encoder:" {
            return Err(bad("expected `encoder:` section".into()));
        }
        let encoder = read_params(r)?;
        if !read_header_line(r)?.is_empty() || read_header_line(r)? != "decoder:" {
            return Err(bad("expected `decoder:` section".into()));
        }
        let decoder = read_params(r)?;
        let m = Self::from_parts(encoder, decoder, log_sigma_y, ci, grid, Standardizer { mean, std })
            .map_err(|e| bad(e.to_string()))?;
        if m.latent != latent {
            return Err(bad(format!("manifest declares latent {latent}, encoder produces {}", m.latent)));
        }
        if std.iter().any(|s| !(*s > 0.0)) {
            return Err(bad("position_std must be positive".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read(&mut f)
    }
}

impl TensorSet for TvaeModel {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        out.extend(self.encoder.tensors().into_iter().map(|(n, t)| (format!("encoder.{n}"), t)));
        out.extend(self.decoder.tensors().into_iter().map(|(n, t)| (format!("decoder.{n}"), t)));
        out.push(("log_sigma_y".into(), &self.log_sigma_y));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.encoder.tensors_mut();
        out.extend(self.decoder.tensors_mut());
        out.push(&mut self.log_sigma_y);
        out
    }
}

/// Loss gradients for every trainable tensor of a [`TvaeModel`].
#[derive(Clone, Debug, PartialEq)]
pub struct TvaeGradients {
    pub encoder: GradientBundle,
    pub decoder: GradientBundle,
    pub log_sigma_y: [f64; 3],
}

impl TvaeGradients {
    pub fn zeros_like(m: &TvaeModel) -> Self {
        TvaeGradients {
            encoder: GradientBundle::zeros_like(&m.encoder),
            decoder: GradientBundle::zeros_like(&m.decoder),
            log_sigma_y: [0.0; 3],
        }
    }

    pub fn add_assign(&mut self, other: &TvaeGradients) {
        self.encoder.add_assign(&other.encoder);
        self.decoder.add_assign(&other.decoder);
        for c in 0..3 {
            self.log_sigma_y[c] += other.log_sigma_y[c];
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.encoder.scale(s);
        self.decoder.scale(s);
        for g in &mut self.log_sigma_y {
            *g *= s;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.encoder.is_finite() && self.decoder.is_finite() && self.log_sigma_y.iter().all(|x| x.is_finite())
    }
}

impl TensorSet for TvaeGradients {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        out.extend(self.encoder.tensors().into_iter().map(|(n, t)| (format!("encoder.{n}"), t)));
        out.extend(self.decoder.tensors().into_iter().map(|(n, t)| (format!("decoder.{n}"), t)));
        out.push(("log_sigma_y".into(), &self.log_sigma_y));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.encoder.tensors_mut();
        out.extend(self.decoder.tensors_mut());
        out.push(&mut self.log_sigma_y);
        out
    }
}
