use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major feature matrix with integer class labels.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetShard {
    features: Vec<f64>,
    labels: Vec<usize>,
    width: usize,
}

impl DatasetShard {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, width: usize) -> Result<Self> {
        if width == 0 && !labels.is_empty() {
            return Err(Error::Argument("feature width must be positive".into()));
        }
        if features.len() != labels.len() * width {
            return Err(Error::Dimension { expected: labels.len() * width, actual: features.len() });
        }
        Ok(Self { features, labels, width })
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.width..(i + 1) * self.width]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], usize)> {
        self.features.chunks_exact(self.width.max(1)).zip(self.labels.iter().copied())
    }

    /// New shard holding the given rows in order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.width);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self { features, labels, width: self.width }
    }

    pub fn class_count(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }
}

/// Gaussian blobs around random class centers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub samples: usize,
    pub features: usize,
    pub classes: usize,
    /// Distance of each class center from the origin.
    pub separation: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { samples: 2000, features: 8, classes: 2, separation: 2.0, noise_std: 1.0, seed: 0 }
    }
}

pub fn synthetic_blobs(spec: &SyntheticSpec) -> Result<DatasetShard> {
    if spec.features == 0 || spec.classes < 2 {
        return Err(Error::Config("synthetic data needs features >= 1 and classes >= 2".into()));
    }
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::Config(format!("noise_std: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            let dir: Vec<f64> = (0..spec.features).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            dir.into_iter().map(|v| v / norm * spec.separation).collect()
        })
        .collect();
    let mut features = Vec::with_capacity(spec.samples * spec.features);
    let mut labels = Vec::with_capacity(spec.samples);
    for i in 0..spec.samples {
        let class = i % spec.classes;
        features.extend(centers[class].iter().map(|c| c + noise.sample(&mut rng)));
        labels.push(class);
    }
    let mut order: Vec<usize> = (0..spec.samples).collect();
    order.shuffle(&mut rng);
    Ok(DatasetShard { features, labels, width: spec.features }.select(&order))
}

/// Reads a CSV with a header row. Every column except `label_column` is a feature.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<DatasetShard> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h.trim() == label_column)
        .ok_or_else(|| Error::Config(format!("{}: no column named `{label_column}`", path.display())))?;
    let width = headers.len() - 1;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = row + 2;
        for (i, field) in record.iter().enumerate() {
            let field = field.trim();
            if i == label_idx {
                let label = field.parse::<usize>().map_err(|_| {
                    Error::Config(format!("{}:{line}: label `{field}` is not a class index", path.display()))
                })?;
                labels.push(label);
            } else {
                let v = field.parse::<f64>().map_err(|_| {
                    Error::Config(format!("{}:{line}: `{field}` is not a number", path.display()))
                })?;
                features.push(v);
            }
        }
    }
    DatasetShard::new(features, labels, width)
}

/// Splits off the last `test_fraction` of a shuffled copy as a test set.
pub fn train_test_split(data: &DatasetShard, test_fraction: f64, seed: u64) -> (DatasetShard, DatasetShard) {
    let mut order: Vec<usize> = (0..data.size()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = ((data.size() as f64) * test_fraction.clamp(0.0, 1.0)).round() as usize;
    let (train, held) = order.split_at(data.size() - test);
    (data.select(train), data.select(held))
}

/// Uniformly random disjoint shards. With `shard_size` unset the data is
/// split as evenly as possible.
pub fn partition<R: Rng + ?Sized>(
    data: &DatasetShard,
    parts: usize,
    shard_size: Option<usize>,
    rng: &mut R,
) -> Result<Vec<DatasetShard>> {
    if parts == 0 {
        return Err(Error::Argument("cannot partition into zero shards".into()));
    }
    let size = shard_size.unwrap_or(data.size() / parts);
    if size * parts > data.size() {
        return Err(Error::Argument(format!(
            "{parts} shards of {size} rows need more than the {} available",
            data.size()
        )));
    }
    let mut order: Vec<usize> = (0..data.size()).collect();
    order.shuffle(rng);
    Ok(order.chunks(size.max(1)).take(parts).map(|c| data.select(c)).collect())
}
