//! Labelled sample containers, the synthetic blob task and an IDX reader.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::LearningError;

/// Row-major sample matrix with integer class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Vec<f64>,
    pub dim: usize,
    pub labels: Vec<usize>,
    pub classes: usize,
    /// `(rows, cols)` when samples are images.
    pub image_shape: Option<(usize, usize)>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, idx: usize) -> &[f64] {
        &self.features[idx * self.dim..(idx + 1) * self.dim]
    }

    /// Sample indices grouped by label.
    pub fn by_label(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.classes];
        for (i, l) in self.labels.iter().enumerate() {
            groups[*l].push(i);
        }
        groups
    }
}

/// One device's local data `P_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalDataset {
    pub features: Vec<f64>,
    pub dim: usize,
    pub labels: Vec<usize>,
    pub dominant_label: usize,
}

impl LocalDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label_histogram(&self, classes: usize) -> Vec<usize> {
        let mut h = vec![0; classes];
        for l in &self.labels {
            h[*l] += 1;
        }
        h
    }

    /// Concatenates several local datasets (used for the global test set).
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a LocalDataset>) -> LocalDataset {
        let mut out = LocalDataset {
            features: Vec::new(),
            dim: 0,
            labels: Vec::new(),
            dominant_label: 0,
        };
        for p in parts {
            out.dim = p.dim;
            out.features.extend_from_slice(&p.features);
            out.labels.extend_from_slice(&p.labels);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub features: usize,
    pub samples_per_class: usize,
    /// Standard deviation of the class-mean coordinates.
    pub separation: f64,
    /// Standard deviation of the per-sample noise.
    pub noise: f64,
}

/// Gaussian blobs: class means `~ N(0, separation^2 I)`, samples
/// `mean + N(0, noise^2 I)`.
pub fn synthetic_blobs<R: Rng>(spec: &SyntheticSpec, rng: &mut R) -> Dataset {
    let means: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            (0..spec.features)
                .map(|_| spec.separation * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
                .collect()
        })
        .collect();
    let total = spec.classes * spec.samples_per_class;
    let mut features = Vec::with_capacity(total * spec.features);
    let mut labels = Vec::with_capacity(total);
    for (label, mean) in means.iter().enumerate() {
        for _ in 0..spec.samples_per_class {
            for m in mean {
                let z: f64 = StandardNormal.sample(rng);
                features.push(m + spec.noise * z);
            }
            labels.push(label);
        }
    }
    Dataset {
        features,
        dim: spec.features,
        labels,
        classes: spec.classes,
        image_shape: None,
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32, LearningError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| LearningError::Idx("truncated header".into()))
}

/// Parses an unsigned-byte IDX buffer into `(dims, payload)`.
pub fn parse_idx(bytes: &[u8]) -> Result<(Vec<usize>, &[u8]), LearningError> {
    let magic = be_u32(bytes, 0)?;
    if magic >> 16 != 0 || (magic >> 8) & 0xff != 0x08 {
        return Err(LearningError::Idx(format!("unsupported magic {magic:#010x}")));
    }
    let rank = (magic & 0xff) as usize;
    let dims = (0..rank)
        .map(|i| be_u32(bytes, 4 + 4 * i).map(|d| d as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let offset = 4 + 4 * rank;
    let expected: usize = dims.iter().product();
    let payload = &bytes[offset.min(bytes.len())..];
    if payload.len() != expected {
        return Err(LearningError::Idx(format!(
            "payload has {} bytes, dims {:?} need {}",
            payload.len(),
            dims,
            expected
        )));
    }
    Ok((dims, payload))
}

/// Builds a dataset from IDX image (rank 3) and label (rank 1) buffers.
/// Pixels are scaled to `[0, 1]`.
pub fn dataset_from_idx(images: &[u8], labels: &[u8]) -> Result<Dataset, LearningError> {
    let (idims, pixels) = parse_idx(images)?;
    let (ldims, raw_labels) = parse_idx(labels)?;
    if idims.len() != 3 || ldims.len() != 1 || idims[0] != ldims[0] {
        return Err(LearningError::Idx(format!(
            "image dims {idims:?} do not match label dims {ldims:?}"
        )));
    }
    let labels: Vec<usize> = raw_labels.iter().map(|l| *l as usize).collect();
    let classes = labels.iter().max().map_or(0, |m| m + 1).max(10);
    Ok(Dataset {
        features: pixels.iter().map(|p| *p as f64 / 255.0).collect(),
        dim: idims[1] * idims[2],
        labels,
        classes,
        image_shape: Some((idims[1], idims[2])),
    })
}

pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset, LearningError> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| LearningError::Idx(format!("{}: {e}", p.display())));
    dataset_from_idx(&read(images)?, &read(labels)?)
}
