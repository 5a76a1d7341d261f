use crate::error::{Error, Result};

/// A fixed, ordered collection of named parameter tensors.
pub trait TensorSet {
    fn tensors(&self) -> Vec<(String, &[f64])>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// Bias-corrected adaptive moment estimation (or plain SGD).
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        AdamState {
            kind: OptimizerKind::Adam,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        AdamState {
            kind: OptimizerKind::Sgd,
            ..Self::new(learning_rate)
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Apply one update in place. Fails without touching anything if any
    /// gradient entry is non-finite or the shapes disagree.
    pub fn update<P: TensorSet + ?Sized, G: TensorSet + ?Sized>(&mut self, params: &mut P, grads: &G) -> Result<()> {
        let g = grads.tensors();
        {
            let p = params.tensors();
            if p.len() != g.len() || p.iter().zip(&g).any(|(a, b)| a.1.len() != b.1.len()) {
                return Err(Error::Shape("gradients are not congruent with parameters".into()));
            }
        }
        if let Some((name, _)) = g.iter().find(|(_, t)| t.iter().any(|x| !x.is_finite())) {
            return Err(Error::Exploded { tensor: name.clone() });
        }
        if self.first.is_empty() {
            self.first = g.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
            self.second = self.first.clone();
        } else if self.first.len() != g.len() || self.first.iter().zip(&g).any(|(m, (_, t))| m.len() != t.len()) {
            return Err(Error::Shape("optimizer moments are not congruent with gradients".into()));
        }

        self.step += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, (_, g)) in params.tensors_mut().into_iter().zip(&g) {
                    for (w, d) in p.iter_mut().zip(g.iter()) {
                        *w -= lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
                let c1 = 1.0 - b1.powi(self.step as i32);
                let c2 = 1.0 - b2.powi(self.step as i32);
                for (((p, (_, g)), m), v) in params
                    .tensors_mut()
                    .into_iter()
                    .zip(&g)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    for i in 0..p.len() {
                        let d = g[i];
                        m[i] = b1 * m[i] + (1.0 - b1) * d;
                        v[i] = b2 * v[i] + (1.0 - b2) * d * d;
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
