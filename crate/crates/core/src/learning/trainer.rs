use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::DatasetShard;
use super::model::{Architecture, ModelVector};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    /// Minibatch size as a fraction of the shard.
    pub batch_fraction: f64,
    pub local_epochs: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 0.1, batch_fraction: 0.01, local_epochs: 1 }
    }
}

impl TrainConfig {
    pub fn batch_size(&self, shard_size: usize) -> usize {
        ((self.batch_fraction * shard_size as f64).round() as usize).clamp(1, shard_size.max(1))
    }
}

/// Minibatch SGD on softmax cross-entropy.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trainer {
    arch: Architecture,
}

impl Trainer {
    pub fn new(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        Ok(Self { arch })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn local_train(
        &self,
        model: &ModelVector,
        shard: &DatasetShard,
        cfg: &TrainConfig,
        seed: u64,
    ) -> Result<ModelVector> {
        self.arch.check(model)?;
        if !shard.is_empty() && shard.width() != self.arch.features() {
            return Err(Error::Architecture(format!(
                "shard has {} features, model expects {}",
                shard.width(),
                self.arch.features()
            )));
        }
        let mut weights = model.weights().to_vec();
        if shard.is_empty() || cfg.lr == 0.0 {
            return model.with_weights(weights);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = cfg.batch_size(shard.size());
        let mut order: Vec<usize> = (0..shard.size()).collect();
        for _ in 0..cfg.local_epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(batch) {
                let xs: Vec<&[f64]> = chunk.iter().map(|&i| shard.row(i)).collect();
                let ys: Vec<usize> = chunk.iter().map(|&i| shard.label(i)).collect();
                let (_, grad) = self.arch.loss_and_grad(&weights, &xs, &ys);
                for (w, g) in weights.iter_mut().zip(grad) {
                    *w -= cfg.lr * g;
                }
            }
        }
        model.with_weights(weights)
    }

    pub fn predict(&self, model: &ModelVector, x: &[f64]) -> usize {
        self.arch.predict(model.weights(), x)
    }

    pub fn evaluate_f1(&self, model: &ModelVector, test: &DatasetShard) -> f64 {
        let preds: Vec<usize> = test.rows().map(|(x, _)| self.predict(model, x)).collect();
        macro_f1(&preds, test.labels())
    }

    pub fn accuracy(&self, model: &ModelVector, data: &DatasetShard) -> f64 {
        let hits = data.rows().filter(|(x, y)| self.predict(model, x) == *y).count();
        hits as f64 / data.size().max(1) as f64
    }
}

/// Same as [`Trainer::local_train`].
pub fn local_train(
    trainer: &Trainer,
    model: &ModelVector,
    shard: &DatasetShard,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<ModelVector> {
    trainer.local_train(model, shard, cfg, seed)
}

/// Coordinatewise mean of `models[i]` for `i` in `subset`.
pub fn plaintext_fedavg(models: &[ModelVector], subset: &[usize]) -> Result<ModelVector> {
    let Some(&first) = subset.first() else {
        return Err(Error::Argument("cannot average an empty subset".into()));
    };
    let base = models
        .get(first)
        .ok_or_else(|| Error::Argument(format!("subset index {first} out of range")))?;
    let mut sum = vec![0.0; base.dim()];
    for &i in subset {
        let m = models.get(i).ok_or_else(|| Error::Argument(format!("subset index {i} out of range")))?;
        if m.dim() != sum.len() {
            return Err(Error::Dimension { expected: sum.len(), actual: m.dim() });
        }
        for (s, w) in sum.iter_mut().zip(m.weights()) {
            *s += w;
        }
    }
    let n = subset.len() as f64;
    base.with_weights(sum.into_iter().map(|s| s / n).collect())
}

/// Macro-averaged F1 over every class that occurs in labels or predictions.
pub fn macro_f1(preds: &[usize], labels: &[usize]) -> f64 {
    let classes = preds.iter().chain(labels).max().map_or(0, |m| m + 1);
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fn_ = vec![0usize; classes];
    for (&p, &y) in preds.iter().zip(labels) {
        if p == y {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[y] += 1;
        }
    }
    let present: Vec<usize> = (0..classes).filter(|&c| tp[c] + fp[c] + fn_[c] > 0).collect();
    if present.is_empty() {
        return 0.0;
    }
    let total: f64 = present
        .iter()
        .map(|&c| {
            let denom = 2 * tp[c] + fp[c] + fn_[c];
            2.0 * tp[c] as f64 / denom as f64
        })
        .sum();
    total / present.len() as f64
}
