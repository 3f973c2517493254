//! Fully connected ReLU network with a softmax output.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LearningError;

/// Dense layer, weights stored row-major as `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (o, y) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            *y = self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }
}

/// Global or local model parameters `w = (w^(1), ..., w^(L))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub layers: Vec<Layer>,
}

impl ModelParams {
    /// Seeded init: weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn init<R: Rng>(arch: &[usize], rng: &mut R) -> Result<Self, LearningError> {
        if arch.len() < 2 || arch.contains(&0) {
            return Err(LearningError::EmptyArchitecture);
        }
        let layers = arch
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let scale = 1.0 / (inputs as f64).sqrt();
                let mut layer = Layer::zeros(inputs, outputs);
                for v in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                    *v = rng.random_range(-scale..scale);
                }
                layer
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    pub fn architecture(&self) -> Vec<usize> {
        let mut arch = vec![self.layers[0].inputs];
        arch.extend(self.layers.iter().map(|l| l.outputs));
        arch
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn classes(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.architecture() == other.architecture()
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    /// Softmax class probabilities for one sample.
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let mut acts = self.forward(x);
        let mut logits = acts.pop().unwrap();
        softmax_in_place(&mut logits);
        logits
    }

    /// Activations per layer: `[input, hidden (post-ReLU)..., logits]`.
    fn forward(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; layer.outputs];
            layer.forward(acts.last().unwrap(), &mut out);
            if idx + 1 < self.layers.len() {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        acts
    }

    /// Mean cross-entropy over `rows` and its gradient, accumulated into `grad`.
    pub fn loss_and_gradient(&self, features: &[f64], labels: &[usize], rows: &[usize], grad: &mut ModelParams) -> f64 {
        let dim = self.input_dim();
        let scale = 1.0 / rows.len() as f64;
        let mut loss = 0.0;
        for &r in rows {
            let x = &features[r * dim..(r + 1) * dim];
            let acts = self.forward(x);
            let mut delta = acts[acts.len() - 1].clone();
            softmax_in_place(&mut delta);
            loss -= delta[labels[r]].max(f64::MIN_POSITIVE).ln();
            delta[labels[r]] -= 1.0;

            for li in (0..self.layers.len()).rev() {
                let layer = &self.layers[li];
                let input = &acts[li];
                let g = &mut grad.layers[li];
                for (o, dv) in delta.iter().enumerate().take(layer.outputs) {
                    let d = dv * scale;
                    if d == 0.0 {
                        continue;
                    }
                    g.bias[o] += d;
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (gw, v) in row.iter_mut().zip(input) {
                        *gw += d * v;
                    }
                }
                if li > 0 {
                    let mut next = vec![0.0; layer.inputs];
                    for (o, d) in delta.iter().enumerate() {
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        for (n, w) in next.iter_mut().zip(row) {
                            *n += d * w;
                        }
                    }
                    // ReLU derivative on the previous hidden layer
                    for (n, a) in next.iter_mut().zip(input) {
                        if *a <= 0.0 {
                            *n = 0.0;
                        }
                    }
                    delta = next;
                }
            }
        }
        loss * scale
    }
}

pub fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    logits.iter_mut().for_each(|v| *v /= sum);
}
