//! Local trainers, datasets and the plaintext averaging oracle.

mod data;
mod model;
mod trainer;

pub use data::{load_csv, partition, synthetic_blobs, train_test_split, DatasetShard, SyntheticSpec};
pub use model::{Architecture, LayerShape, ModelVector};
pub use trainer::{local_train, macro_f1, plaintext_fedavg, TrainConfig, Trainer};
