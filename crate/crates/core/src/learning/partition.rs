//! Non-IID per-device partitions.
//!
//! Device `i` gets a dominant label `i mod classes`. A share
//! `dominant_fraction` of its samples carry that label and the rest are
//! spread evenly over the other labels. Partition sizes are `base_size`
//! scaled by a uniform factor, inputs are rotated by a per-device angle and
//! every partition is split into train and test parts.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::data::{Dataset, LocalDataset};
use super::LearningError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub devices: usize,
    pub base_size: usize,
    pub dominant_fraction: f64,
    pub size_factor_min: f64,
    pub size_factor_max: f64,
    pub rotation_limit_deg: f64,
    pub train_fraction: f64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            devices: 20,
            base_size: 200,
            dominant_fraction: 0.9,
            size_factor_min: 0.25,
            size_factor_max: 1.0,
            rotation_limit_deg: 45.0,
            train_fraction: 0.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DevicePartition {
    pub device: usize,
    pub dominant_label: usize,
    pub rotation_deg: f64,
    /// Label histogram of the whole partition (train + test).
    pub histogram: Vec<usize>,
    pub train: LocalDataset,
    pub test: LocalDataset,
}

impl DevicePartition {
    pub fn size(&self) -> usize {
        self.train.len() + self.test.len()
    }
}

/// Per-label sample counts for a partition of `n` samples.
///
/// The dominant label gets `round(n * fraction)`; the remainder `r` is split
/// as `r / (classes - 1)` per other label, with the first `r % (classes - 1)`
/// labels after the dominant one (cyclically) getting one extra.
pub fn label_counts(n: usize, classes: usize, dominant: usize, fraction: f64) -> Vec<usize> {
    let mut counts = vec![0; classes];
    let dom = ((n as f64 * fraction).round() as usize).min(n);
    counts[dominant] = dom;
    let others = classes - 1;
    if others == 0 {
        counts[dominant] = n;
        return counts;
    }
    let rest = n - dom;
    for step in 1..classes {
        let label = (dominant + step) % classes;
        counts[label] = rest / others + usize::from(step <= rest % others);
    }
    counts
}

/// Rotates a `rows x cols` image by `deg` degrees about its centre
/// (bilinear, zero outside).
pub fn rotate_image(pixels: &[f64], rows: usize, cols: usize, deg: f64) -> Vec<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    let cy = (rows as f64 - 1.0) / 2.0;
    let cx = (cols as f64 - 1.0) / 2.0;
    let at = |y: isize, x: isize| -> f64 {
        if y < 0 || x < 0 || y >= rows as isize || x >= cols as isize {
            0.0
        } else {
            pixels[y as usize * cols + x as usize]
        }
    };
    let mut out = vec![0.0; rows * cols];
    for y in 0..rows {
        for x in 0..cols {
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            // inverse mapping: source = R(-deg) * target
            let sx = c * dx + s * dy + cx;
            let sy = -s * dx + c * dy + cy;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            out[y * cols + x] = at(y0, x0) * (1.0 - fx) * (1.0 - fy)
                + at(y0, x0 + 1) * fx * (1.0 - fy)
                + at(y0 + 1, x0) * (1.0 - fx) * fy
                + at(y0 + 1, x0 + 1) * fx * fy;
        }
    }
    out
}

/// Orthogonal transform for plain feature vectors: coordinates are paired at
/// random and each pair is rotated by the device angle.
#[derive(Debug, Clone)]
struct PlaneRotation {
    pairs: Vec<(usize, usize)>,
    sin: f64,
    cos: f64,
}

impl PlaneRotation {
    fn new<R: Rng>(dim: usize, deg: f64, rng: &mut R) -> Self {
        let mut order: Vec<usize> = (0..dim).collect();
        order.shuffle(rng);
        let (sin, cos) = deg.to_radians().sin_cos();
        Self {
            pairs: order.chunks_exact(2).map(|p| (p[0], p[1])).collect(),
            sin,
            cos,
        }
    }

    fn apply(&self, x: &mut [f64]) {
        for &(a, b) in &self.pairs {
            let (u, v) = (x[a], x[b]);
            x[a] = self.cos * u - self.sin * v;
            x[b] = self.sin * u + self.cos * v;
        }
    }
}

pub fn partition_dataset<R: Rng>(
    dataset: &Dataset,
    cfg: &PartitionConfig,
    rng: &mut R,
) -> Result<Vec<DevicePartition>, LearningError> {
    if dataset.classes < 2 {
        return Err(LearningError::InvalidConfig("need at least two classes".into()));
    }
    if !(cfg.size_factor_min > 0.0 && cfg.size_factor_min <= cfg.size_factor_max) {
        return Err(LearningError::InvalidConfig(
            "size factor range must satisfy 0 < min <= max".into(),
        ));
    }
    let mut pools = dataset.by_label();
    for pool in pools.iter_mut() {
        pool.shuffle(rng);
    }
    let mut cursor = vec![0usize; dataset.classes];

    let mut out = Vec::with_capacity(cfg.devices);
    for device in 0..cfg.devices {
        let dominant = device % dataset.classes;
        let factor = if cfg.size_factor_min == cfg.size_factor_max {
            cfg.size_factor_min
        } else {
            rng.random_range(cfg.size_factor_min..=cfg.size_factor_max)
        };
        let n = ((cfg.base_size as f64 * factor).floor() as usize).max(1);
        let counts = label_counts(n, dataset.classes, dominant, cfg.dominant_fraction);

        let mut picked = Vec::with_capacity(n);
        for (label, &need) in counts.iter().enumerate() {
            let available = pools[label].len() - cursor[label];
            if need > available {
                return Err(LearningError::InsufficientSamples {
                    label,
                    needed: need,
                    available,
                });
            }
            picked.extend_from_slice(&pools[label][cursor[label]..cursor[label] + need]);
            cursor[label] += need;
        }
        picked.shuffle(rng);

        let rotation_deg = if cfg.rotation_limit_deg > 0.0 {
            rng.random_range(-cfg.rotation_limit_deg..=cfg.rotation_limit_deg)
        } else {
            0.0
        };
        let plane = match dataset.image_shape {
            None => Some(PlaneRotation::new(dataset.dim, rotation_deg, rng)),
            Some(_) => None,
        };
        let mut features = Vec::with_capacity(n * dataset.dim);
        let mut labels = Vec::with_capacity(n);
        for &idx in &picked {
            let x = dataset.sample(idx);
            let transformed = match (dataset.image_shape, &plane) {
                (Some((rows, cols)), _) => rotate_image(x, rows, cols, rotation_deg),
                (None, Some(p)) => {
                    let mut v = x.to_vec();
                    p.apply(&mut v);
                    v
                }
                (None, None) => x.to_vec(),
            };
            features.extend(transformed);
            labels.push(dataset.labels[idx]);
        }

        let n_train = ((n as f64 * cfg.train_fraction).round() as usize).min(n);
        let split = n_train * dataset.dim;
        out.push(DevicePartition {
            device,
            dominant_label: dominant,
            rotation_deg,
            histogram: counts,
            train: LocalDataset {
                features: features[..split].to_vec(),
                dim: dataset.dim,
                labels: labels[..n_train].to_vec(),
                dominant_label: dominant,
            },
            test: LocalDataset {
                features: features[split..].to_vec(),
                dim: dataset.dim,
                labels: labels[n_train..].to_vec(),
                dominant_label: dominant,
            },
        });
    }
    Ok(out)
}
