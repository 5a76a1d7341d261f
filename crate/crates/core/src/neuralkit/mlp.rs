use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::adam::TensorSet;
use crate::error::{Error, Result};

/// Lower bound added to softplus outputs that parameterize standard deviations.
pub const SIGMA_FLOOR: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    /// Identity on outputs `[0, from)`, `softplus(x) + SIGMA_FLOOR` on `[from, out)`.
    SoftplusTail { from: usize },
}

impl Activation {
    pub fn tag(&self) -> String {
        match self {
            Activation::Identity => "identity".into(),
            Activation::Tanh => "tanh".into(),
            Activation::SoftplusTail { from } => format!("softplus_tail:{from}"),
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "identity" => Some(Activation::Identity),
            "tanh" => Some(Activation::Tanh),
            _ => tag
                .strip_prefix("softplus_tail:")
                .and_then(|n| n.parse().ok())
                .map(|from| Activation::SoftplusTail { from }),
        }
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fully connected layer: `act(W·x + b)` with `W` stored `[out × in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Dense {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
            activation,
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(input: usize, output: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((output, input), || rng.random_range(-limit..=limit));
        Dense {
            weight,
            bias: Array1::zeros(output),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    fn activate(&self, pre: &Array2<f64>) -> Array2<f64> {
        match self.activation {
            Activation::Identity => pre.clone(),
            Activation::Tanh => pre.mapv(f64::tanh),
            Activation::SoftplusTail { from } => {
                let mut out = pre.clone();
                out.slice_mut(ndarray::s![.., from..])
                    .mapv_inplace(|x| softplus(x) + SIGMA_FLOOR);
                out
            }
        }
    }

    /// `grad ⊙ act'(pre)`, using the cached post-activation where cheaper.
    fn activation_backward(&self, pre: &Array2<f64>, post: &Array2<f64>, grad: ArrayView2<f64>) -> Array2<f64> {
        match self.activation {
            Activation::Identity => grad.to_owned(),
            Activation::Tanh => {
                let mut out = grad.to_owned();
                out.zip_mut_with(post, |g, &a| *g *= 1.0 - a * a);
                out
            }
            Activation::SoftplusTail { from } => {
                let mut out = grad.to_owned();
                let pre_tail = pre.slice(ndarray::s![.., from..]);
                out.slice_mut(ndarray::s![.., from..])
                    .zip_mut_with(&pre_tail, |g, &z| *g *= sigmoid(z));
                out
            }
        }
    }
}

/// Activations retained by a forward pass for the matching backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, |x| x.nrows())
    }

    /// Hidden-layer outputs of the first layer, rows per batch element.
    pub fn hidden(&self) -> Option<&Array2<f64>> {
        self.post.first()
    }
}

/// ∂loss/∂parameter for every layer of an [`MlpParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBundle {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl GradientBundle {
    pub fn zeros_like(p: &MlpParams) -> Self {
        GradientBundle {
            weights: p.layers.iter().map(|l| Array2::zeros(l.weight.raw_dim())).collect(),
            biases: p.layers.iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &GradientBundle) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for w in &mut self.weights {
            *w *= s;
        }
        for b in &mut self.biases {
            *b *= s;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|x| x.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// A stack of dense layers.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    layers: Vec<Dense>,
}

impl MlpParams {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(Error::Shape(format!(
                    "layer {i}: bias has {} entries for {} outputs",
                    l.bias.len(),
                    l.output_dim()
                )));
            }
            if let Activation::SoftplusTail { from } = l.activation {
                if from > l.output_dim() {
                    return Err(Error::Shape(format!(
                        "layer {i}: softplus slice starts at {from} past {} outputs",
                        l.output_dim()
                    )));
                }
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Shape(format!(
                    "layer {i} emits {} values but layer {} expects {}",
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        Ok(MlpParams { layers })
    }

    /// `input → hidden (tanh) → output (output_activation)`, Glorot-initialized.
    pub fn two_layer<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        output: usize,
        output_activation: Activation,
        rng: &mut R,
    ) -> Self {
        MlpParams {
            layers: vec![
                Dense::glorot(input, hidden, Activation::Tanh, rng),
                Dense::glorot(hidden, output, output_activation, rng),
            ],
        }
    }

    pub fn two_layer_zeros(input: usize, hidden: usize, output: usize, output_activation: Activation) -> Self {
        MlpParams {
            layers: vec![
                Dense::zeros(input, hidden, Activation::Tanh),
                Dense::zeros(hidden, output, output_activation),
            ],
        }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|x| x.is_finite()))
    }

    /// Forward pass over a batch, one input per row.
    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} features, network expects {}",
                inputs.ncols(),
                self.input_dim()
            )));
        }
        let n = self.layers.len();
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(n),
            pre: Vec::with_capacity(n),
            post: Vec::with_capacity(n),
        };
        let mut x = inputs.to_owned();
        for layer in &self.layers {
            let mut z = x.dot(&layer.weight.t());
            z += &layer.bias;
            let a = layer.activate(&z);
            cache.inputs.push(x);
            cache.pre.push(z);
            x = a.clone();
            cache.post.push(a);
        }
        Ok((x, cache))
    }

    /// Backward pass for `sum(output_grad ⊙ output)`; parameter gradients are
    /// summed over the batch.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache,
        output_grad: ArrayView2<f64>,
    ) -> Result<(GradientBundle, Array2<f64>)> {
        if cache.inputs.len() != self.layers.len()
            || cache
                .inputs
                .iter()
                .zip(&self.layers)
                .any(|(x, l)| x.ncols() != l.input_dim())
        {
            return Err(Error::Shape("forward cache does not belong to this network".into()));
        }
        if output_grad.dim() != (cache.batch_size(), self.output_dim()) {
            return Err(Error::Shape(format!(
                "output gradient is {:?}, expected ({}, {})",
                output_grad.dim(),
                cache.batch_size(),
                self.output_dim()
            )));
        }
        let mut weights = Vec::with_capacity(self.layers.len());
        let mut biases = Vec::with_capacity(self.layers.len());
        let mut grad = output_grad.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let dz = layer.activation_backward(&cache.pre[i], &cache.post[i], grad.view());
            weights.push(dz.t().dot(&cache.inputs[i]).as_standard_layout().into_owned());
            biases.push(dz.sum_axis(Axis(0)));
            grad = dz.dot(&layer.weight);
        }
        weights.reverse();
        biases.reverse();
        Ok((GradientBundle { weights, biases }, grad))
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        let x = ArrayView2::from_shape((1, input.len()), input).map_err(|e| Error::Shape(e.to_string()))?;
        let (out, cache) = self.forward_batch(x)?;
        Ok((out.iter().copied().collect(), cache))
    }

    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f64]) -> Result<(GradientBundle, Vec<f64>)> {
        let g = ArrayView2::from_shape((1, output_grad.len()), output_grad)
            .map_err(|e| Error::Shape(e.to_string()))?;
        let (grads, input_grad) = self.backward_batch(cache, g)?;
        Ok((grads, input_grad.iter().copied().collect()))
    }

    /// Frozen single-precision copy for inference.
    pub fn to_f32(&self) -> Mlp32 {
        Mlp32 {
            layers: self
                .layers
                .iter()
                .map(|l| (l.weight.t().mapv(|x| x as f32), l.bias.mapv(|x| x as f32), l.activation))
                .collect(),
        }
    }
}

impl TensorSet for MlpParams {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("layer{i}.weight"), l.weight.as_slice().expect("standard layout")));
            out.push((format!("layer{i}.bias"), l.bias.as_slice().expect("standard layout")));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }
}

impl TensorSet for GradientBundle {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            out.push((format!("layer{i}.weight"), w.as_slice().expect("standard layout")));
            out.push((format!("layer{i}.bias"), b.as_slice().expect("standard layout")));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            out.push(w.as_slice_mut().expect("standard layout"));
            out.push(b.as_slice_mut().expect("standard layout"));
        }
        out
    }
}

/// Single-precision inference copy of an [`MlpParams`]; weights stored `[in × out]`.
#[derive(Clone, Debug)]
pub struct Mlp32 {
    layers: Vec<(Array2<f32>, Array1<f32>, Activation)>,
}

impl Mlp32 {
    pub fn forward_batch(&self, inputs: ArrayView2<f32>) -> Array2<f32> {
        let mut x = inputs.to_owned();
        for (w, b, act) in &self.layers {
            let mut z = x.dot(w);
            z += b;
            match *act {
                Activation::Identity => {}
                Activation::Tanh => z.mapv_inplace(f32::tanh),
                Activation::SoftplusTail { from } => z
                    .slice_mut(ndarray::s![.., from..])
                    .mapv_inplace(|v| (softplus(v as f64) + SIGMA_FLOOR) as f32),
            }
            x = z;
        }
        x
    }
}
