//! Local training, aggregation and evaluation for the federated task.

pub mod data;
pub mod model;
pub mod partition;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use data::{Dataset, LocalDataset};
pub use model::ModelParams;
pub use partition::{partition_dataset, DevicePartition, PartitionConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearningError {
    #[error("architecture needs at least an input and an output layer of nonzero width")]
    EmptyArchitecture,
    #[error("local dataset is empty")]
    EmptyDataset,
    #[error("loss diverged (non-finite) at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },
    #[error("model shapes differ")]
    ShapeMismatch,
    #[error("no models to aggregate")]
    NothingToAggregate,
    #[error("aggregation weights must be positive and match the model count")]
    BadWeights,
    #[error("label {label} needs {needed} samples but only {available} remain")]
    InsufficientSamples {
        label: usize,
        needed: usize,
        available: usize,
    },
    #[error("invalid learning config: {0}")]
    InvalidConfig(String),
    #[error("idx: {0}")]
    Idx(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearningError> {
        if self.local_epochs == 0 || self.batch_size == 0 {
            return Err(LearningError::InvalidConfig(
                "local_epochs and batch_size must be >= 1".into(),
            ));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(LearningError::InvalidConfig("learning_rate must be >= 0".into()));
        }
        Ok(())
    }
}

/// Runs `local_epochs` of mini-batch SGD on `data`, reshuffling each epoch
/// with `rng`. The final short batch is kept.
pub fn local_train<R: Rng>(
    w: &ModelParams,
    data: &LocalDataset,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<ModelParams, LearningError> {
    if data.is_empty() {
        return Err(LearningError::EmptyDataset);
    }
    cfg.validate()?;
    let mut params = w.clone();
    let mut grad = w.zeros_like();
    for epoch in 0..cfg.local_epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(rng);
        for (batch, rows) in order.chunks(cfg.batch_size).enumerate() {
            grad.values_mut().for_each(|g| *g = 0.0);
            let loss = params.loss_and_gradient(&data.features, &data.labels, rows, &mut grad);
            if !loss.is_finite() || !grad.is_finite() {
                return Err(LearningError::Divergence { epoch, batch });
            }
            for (p, g) in params.values_mut().zip(grad.values()) {
                *p -= cfg.learning_rate * g;
            }
        }
    }
    if !params.is_finite() {
        return Err(LearningError::Divergence {
            epoch: cfg.local_epochs - 1,
            batch: data.len().div_ceil(cfg.batch_size) - 1,
        });
    }
    Ok(params)
}

/// Weighted average `sum (n_i / m) w_i`, written as `w_0 + sum (n_i / m)(w_i - w_0)`
/// so identical inputs come back unchanged.
pub fn aggregate(models: &[ModelParams], weights: &[f64]) -> Result<ModelParams, LearningError> {
    let first = models.first().ok_or(LearningError::NothingToAggregate)?;
    if weights.len() != models.len() || weights.iter().any(|w| !(*w > 0.0)) {
        return Err(LearningError::BadWeights);
    }
    if models.iter().any(|m| !m.same_shape(first)) {
        return Err(LearningError::ShapeMismatch);
    }
    let total: f64 = weights.iter().sum();
    let mut out = first.clone();
    for (m, w) in models.iter().zip(weights).skip(1) {
        let share = w / total;
        for (o, (v, base)) in out.values_mut().zip(m.values().zip(first.values())) {
            *o += share * (v - base);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

/// Mean cross-entropy and argmax accuracy of `w` on `data`.
pub fn evaluate(w: &ModelParams, data: &LocalDataset) -> Evaluation {
    if data.is_empty() {
        return Evaluation {
            loss: 0.0,
            accuracy: 0.0,
        };
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (i, label) in data.labels.iter().enumerate() {
        let p = w.predict(&data.features[i * data.dim..(i + 1) * data.dim]);
        loss -= p[*label].max(f64::MIN_POSITIVE).ln();
        let arg = p
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        correct += usize::from(arg == *label);
    }
    Evaluation {
        loss: loss / data.len() as f64,
        accuracy: correct as f64 / data.len() as f64,
    }
}

/// `f(w) = sum_i (n_i / m) f_i(w)` over the given local datasets.
pub fn global_loss<'a>(w: &ModelParams, datasets: impl IntoIterator<Item = &'a LocalDataset>) -> f64 {
    let mut weighted = 0.0;
    let mut total = 0usize;
    for d in datasets {
        if d.is_empty() {
            continue;
        }
        weighted += evaluate(w, d).loss * d.len() as f64;
        total += d.len();
    }
    if total == 0 {
        0.0
    } else {
        weighted / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy(n: usize, dim: usize, classes: usize, seed: u64) -> LocalDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LocalDataset {
            features: (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            dim,
            labels: (0..n).map(|_| rng.random_range(0..classes)).collect(),
            dominant_label: 0,
        }
    }

    fn model(arch: &[usize], seed: u64) -> ModelParams {
        ModelParams::init(arch, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let w = model(&[4, 6, 3], 1);
        let cfg = TrainConfig {
            local_epochs: 2,
            batch_size: 3,
            learning_rate: 0.0,
            seed: 0,
        };
        let out = local_train(&w, &toy(10, 4, 3, 2), &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out, w);
    }

    #[test]
    fn epochs_compose() {
        let w = model(&[4, 6, 3], 1);
        let data = toy(11, 4, 3, 2);
        let mut cfg = TrainConfig {
            local_epochs: 2,
            batch_size: 4,
            learning_rate: 0.1,
            seed: 0,
        };
        let two = local_train(&w, &data, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        cfg.local_epochs = 1;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let once = local_train(&w, &data, &cfg, &mut rng).unwrap();
        let twice = local_train(&once, &data, &cfg, &mut rng).unwrap();
        assert_eq!(two, twice);
    }

    #[test]
    fn single_batch_step_matches_finite_differences() {
        let w = model(&[5, 4, 3], 7);
        let data = toy(6, 5, 3, 8);
        let eta = 0.05;
        let cfg = TrainConfig {
            local_epochs: 1,
            batch_size: 6,
            learning_rate: eta,
            seed: 0,
        };
        let stepped = local_train(&w, &data, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let h = 1e-5;
        let rows: Vec<usize> = (0..6).collect();
        let loss = |m: &ModelParams| {
            let mut g = m.zeros_like();
            m.loss_and_gradient(&data.features, &data.labels, &rows, &mut g)
        };
        let n = w.parameter_count();
        for idx in 0..n {
            let mut plus = w.clone();
            let mut minus = w.clone();
            *plus.values_mut().nth(idx).unwrap() += h;
            *minus.values_mut().nth(idx).unwrap() -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let step = (w.values().nth(idx).unwrap() - stepped.values().nth(idx).unwrap()) / eta;
            let denom = fd.abs().max(step.abs()).max(1e-8);
            assert!((fd - step).abs() / denom < 1e-4, "param {idx}: fd {fd} vs step {step}");
        }
    }

    #[test]
    fn divergence_detected() {
        let mut w = model(&[2, 3, 2], 1);
        w.layers[1].bias[0] = f64::NAN;
        let cfg = TrainConfig {
            local_epochs: 1,
            batch_size: 2,
            learning_rate: 0.1,
            seed: 0,
        };
        let err = local_train(&w, &toy(4, 2, 2, 1), &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert_eq!(err, LearningError::Divergence { epoch: 0, batch: 0 });
    }

    fn scalar(v: f64) -> ModelParams {
        ModelParams {
            layers: vec![model::Layer {
                inputs: 1,
                outputs: 1,
                weights: vec![v],
                bias: vec![0.0],
            }],
        }
    }

    #[test]
    fn aggregation_rules() {
        let out = aggregate(&[scalar(0.0), scalar(4.0)], &[1.0, 3.0]).unwrap();
        assert_eq!(out.layers[0].weights[0], 3.0);
        let mean = aggregate(&[scalar(2.0), scalar(4.0)], &[5.0, 5.0]).unwrap();
        assert_eq!(mean.layers[0].weights[0], 3.0);
        let w = model(&[3, 4, 2], 3);
        assert_eq!(aggregate(std::slice::from_ref(&w), &[7.0]).unwrap(), w);
        assert_eq!(
            aggregate(&[w.clone(), w.clone(), w.clone()], &[1.0, 2.0, 7.0]).unwrap(),
            w
        );
        assert_eq!(aggregate(&[], &[]), Err(LearningError::NothingToAggregate));
        assert_eq!(
            aggregate(&[w.clone(), model(&[3, 5, 2], 1)], &[1.0, 1.0]),
            Err(LearningError::ShapeMismatch)
        );
        assert_eq!(
            aggregate(std::slice::from_ref(&w), &[0.0]),
            Err(LearningError::BadWeights)
        );
    }

    #[test]
    fn uniform_prediction_loss() {
        let mut w = model(&[3, 4, 10], 3);
        w.layers[1].weights.iter_mut().for_each(|v| *v = 0.0);
        w.layers[1].bias.iter_mut().for_each(|v| *v = 0.0);
        let e = evaluate(&w, &toy(25, 3, 10, 4));
        assert!((e.loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction() {
        // identity-like network with large logits
        let mut w = model(&[2, 2, 2], 0);
        w.layers[0].weights = vec![1.0, 0.0, 0.0, 1.0];
        w.layers[0].bias = vec![0.0, 0.0];
        w.layers[1].weights = vec![60.0, -60.0, -60.0, 60.0];
        w.layers[1].bias = vec![0.0, 0.0];
        let data = LocalDataset {
            features: vec![1.0, 0.0, 0.0, 1.0],
            dim: 2,
            labels: vec![0, 1],
            dominant_label: 0,
        };
        let e = evaluate(&w, &data);
        assert_eq!(e.accuracy, 1.0);
        assert!(e.loss < 1e-12);
    }

    #[test]
    fn global_loss_is_weighted() {
        let w = model(&[3, 4, 3], 2);
        let a = toy(5, 3, 3, 1);
        let b = toy(15, 3, 3, 2);
        let expected = (evaluate(&w, &a).loss * 5.0 + evaluate(&w, &b).loss * 15.0) / 20.0;
        assert!((global_loss(&w, [&a, &b]) - expected).abs() < 1e-12);
    }
}
