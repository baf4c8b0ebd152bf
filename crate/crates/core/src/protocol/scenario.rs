//! TOML scenario files for the simulator.
//!
//! ```toml
//! seed = 7
//! epochs = 30
//! participants = 10
//! threshold = 5
//! security_bits = 256
//!
//! [dp]
//! epsilon = 0.5
//!
//! [model]
//! kind = "mlp"
//! hidden = [16, 32]
//!
//! [[dropout]]
//! epoch = 2
//! participants = [3]
//!
//! [[join]]
//! epoch = 2
//! count = 1
//! ```

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::RunReport;
use super::network::{units_to_ticks, LatencyModel};
use super::sim::{
    run_training, Baseline, DelayRule, DropoutRule, JoinRule, Participant, Schedule, TrainingConfig, TrainingInputs,
};
use crate::dp::DEFAULT_DELTA;
use crate::error::{Error, Result};
use crate::fixedpoint::DEFAULT_PRECISION;
use crate::group::DEFAULT_SECURITY_BITS;
use crate::learning::{
    load_csv, partition, synthetic_blobs, train_test_split, Architecture, DatasetShard, SyntheticSpec, TrainConfig,
    Trainer,
};
use crate::mife::NonceMode;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpSection {
    pub epsilon: f64,
    pub delta: f64,
    pub clip: f64,
}

impl Default for DpSection {
    fn default() -> Self {
        Self { epsilon: 0.5, delta: DEFAULT_DELTA, clip: 4.0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Logistic,
    #[default]
    Mlp,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub hidden: Vec<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { kind: ModelKind::Mlp, hidden: vec![16, 32] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// CSV file; synthetic blobs are generated when unset.
    pub csv: Option<PathBuf>,
    pub label_column: String,
    pub samples: usize,
    pub features: usize,
    pub classes: usize,
    pub separation: f64,
    pub noise_std: f64,
    /// Rows per participant; the training split is divided evenly when unset.
    pub shard_size: Option<usize>,
    pub test_fraction: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        let s = SyntheticSpec::default();
        Self {
            csv: None,
            label_column: "label".into(),
            samples: s.samples,
            features: s.features,
            classes: s.classes,
            separation: s.separation,
            noise_std: s.noise_std,
            shard_size: None,
            test_fraction: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    /// Simulated time units.
    pub latency: f64,
    pub jitter: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self { latency: 0.05, jitter: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub epochs: u32,
    pub participants: usize,
    pub capacity: usize,
    pub threshold: u32,
    pub max_wait: f64,
    pub precision: u32,
    pub mode: NonceMode,
    pub baseline: Baseline,
    pub security_bits: u32,
    pub group_seed: Option<u64>,
    pub value_bound: f64,
    pub dlog_table_bound: Option<u64>,
    pub record_oracle: bool,
    pub require_honest_majority: bool,
    pub dp: DpSection,
    pub train: TrainConfig,
    pub model: ModelSection,
    pub data: DataSection,
    pub network: NetworkSection,
    pub dropout: Vec<DropoutRule>,
    pub delay: Vec<DelayRule>,
    pub join: Vec<JoinRule>,
}

impl Default for Scenario {
    fn default() -> Self {
        let t = TrainingConfig::default();
        Self {
            seed: 0,
            epochs: t.epochs,
            participants: 10,
            capacity: t.capacity,
            threshold: t.threshold,
            max_wait: t.max_wait,
            precision: DEFAULT_PRECISION,
            mode: NonceMode::PerCoordinate,
            baseline: Baseline::HybridDp,
            security_bits: DEFAULT_SECURITY_BITS,
            group_seed: None,
            value_bound: t.value_bound,
            dlog_table_bound: None,
            record_oracle: false,
            require_honest_majority: false,
            dp: DpSection::default(),
            train: TrainConfig::default(),
            model: ModelSection::default(),
            data: DataSection::default(),
            network: NetworkSection::default(),
            dropout: Vec::new(),
            delay: Vec::new(),
            join: Vec::new(),
        }
    }
}

/// 1-based line of the first `key = ...` assignment in `text`.
fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        scenario.validate(text)?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut s = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        // CSV paths are relative to the scenario file
        if let (Some(csv), Some(dir)) = (&s.data.csv, path.parent()) {
            if csv.is_relative() {
                s.data.csv = Some(dir.join(csv));
            }
        }
        Ok(s)
    }

    fn validate(&self, text: &str) -> Result<()> {
        let fail = |key: &str, msg: String| {
            let loc = line_of(text, key).map(|l| format!("line {l}: ")).unwrap_or_default();
            Err(Error::Config(format!("{loc}{msg}")))
        };
        if self.participants == 0 {
            return fail("participants", "participants must be at least 1".into());
        }
        if self.threshold == 0 {
            return fail("threshold", "threshold must be at least 1".into());
        }
        if self.threshold as usize > self.participants {
            return fail(
                "threshold",
                format!("threshold {} exceeds participants {}", self.threshold, self.participants),
            );
        }
        let total = self.participants + self.join.iter().map(|j| j.count).sum::<usize>();
        if total > self.capacity {
            return fail("capacity", format!("capacity {} is below the {total} participants ever registered", self.capacity));
        }
        for d in &self.dropout {
            if let Some(&p) = d.participants.iter().find(|&&p| p >= total) {
                return fail("participants", format!("dropout names unknown participant {p}"));
            }
        }
        for d in &self.delay {
            if let Some(&p) = d.participants.iter().find(|&&p| p >= total) {
                return fail("participants", format!("delay names unknown participant {p}"));
            }
        }
        if !(0.0..1.0).contains(&self.data.test_fraction) {
            return fail("test_fraction", "test_fraction must lie in [0, 1)".into());
        }
        if !(self.train.batch_fraction > 0.0 && self.train.batch_fraction <= 1.0) {
            return fail("batch_fraction", "batch_fraction must lie in (0, 1]".into());
        }
        if self.max_wait < 0.0 {
            return fail("max_wait", "max_wait must be non-negative".into());
        }
        Ok(())
    }

    pub fn training_config(&self) -> TrainingConfig {
        TrainingConfig {
            epochs: self.epochs,
            epsilon: self.dp.epsilon,
            delta: self.dp.delta,
            clip: self.dp.clip,
            threshold: self.threshold,
            max_wait: self.max_wait,
            capacity: self.capacity,
            precision: self.precision,
            mode: self.mode,
            seed: self.seed,
            security_bits: self.security_bits,
            group_seed: self.group_seed,
            baseline: self.baseline,
            train: self.train,
            latency: LatencyModel { base: units_to_ticks(self.network.latency), jitter: units_to_ticks(self.network.jitter) },
            value_bound: self.value_bound,
            dlog_table_bound: self.dlog_table_bound,
            record_oracle: self.record_oracle,
            require_honest_majority: self.require_honest_majority,
        }
    }

    pub fn schedule(&self) -> Schedule {
        Schedule { dropouts: self.dropout.clone(), delays: self.delay.clone(), joins: self.join.clone() }
    }

    fn dataset(&self) -> Result<DatasetShard> {
        match &self.data.csv {
            Some(path) => load_csv(path, &self.data.label_column),
            None => synthetic_blobs(&SyntheticSpec {
                samples: self.data.samples,
                features: self.data.features,
                classes: self.data.classes,
                separation: self.data.separation,
                noise_std: self.data.noise_std,
                seed: self.seed,
            }),
        }
    }

    /// Generates data, shards it and initializes the model.
    pub fn inputs(&self) -> Result<TrainingInputs> {
        let data = self.dataset()?;
        let (train, test) = train_test_split(&data, self.data.test_fraction, self.seed);
        let classes = data.class_count().max(self.data.classes.min(2)).max(2);
        let arch = match self.model.kind {
            ModelKind::Logistic => Architecture::Logistic { features: data.width(), classes },
            ModelKind::Mlp => Architecture::Mlp { features: data.width(), hidden: self.model.hidden.clone(), classes },
        };
        let trainer = Trainer::new(arch.clone())?;
        let total = self.participants + self.join.iter().map(|j| j.count).sum::<usize>();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let shards = partition(&train, total, self.data.shard_size, &mut rng)?;
        let participants = shards
            .into_iter()
            .enumerate()
            .map(|(i, shard)| Participant { id: format!("p{i}"), shard })
            .collect();
        Ok(TrainingInputs {
            initial_model: arch.init(&mut rng),
            trainer,
            participants,
            test_set: (!test.is_empty()).then_some(test),
        })
    }

    pub fn run(&self) -> Result<RunReport> {
        run_training(&self.training_config(), self.inputs()?, &self.schedule())
    }
}
