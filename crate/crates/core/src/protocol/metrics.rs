use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::network::TraceEntry;
use super::sim::Baseline;
use crate::error::Result;
use crate::learning::ModelVector;

/// Total crypto-related messages for `m` aggregators and `n` participants:
/// `n` key distributions, `m` function-key fetches and `m * n` uploads.
pub fn crypto_message_total(m: usize, n: usize) -> usize {
    m * n + m + n
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpochStatus {
    Completed,
    /// Fewer than `t` responses arrived before the wait expired.
    Aborted,
    /// The authority refused the weight vector.
    Rejected,
}

/// Deterministic per-epoch counters; everything here is reproducible from the seed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: u32,
    pub status: EpochStatus,
    pub registered: usize,
    pub queries_sent: usize,
    pub responses_received: usize,
    pub stale_responses: usize,
    pub key_requests: usize,
    pub ct_uploads: usize,
    pub ct_bytes_initial: usize,
    pub ct_bytes_subsequent: usize,
    pub bytes_up: usize,
    pub bytes_down: usize,
    pub key_bytes: usize,
    pub registrations: usize,
    pub dropouts: usize,
    pub joins: usize,
    pub crypto_messages: usize,
    pub noise_std: f64,
    pub epsilon_spent: f64,
    pub f1: Option<f64>,
    pub oracle_max_abs_diff: Option<f64>,
    #[serde(skip)]
    pub responder_slots: Vec<usize>,
}

impl EpochMetrics {
    pub fn new(epoch: u32) -> Self {
        Self {
            epoch,
            status: EpochStatus::Aborted,
            registered: 0,
            queries_sent: 0,
            responses_received: 0,
            stale_responses: 0,
            key_requests: 0,
            ct_uploads: 0,
            ct_bytes_initial: 0,
            ct_bytes_subsequent: 0,
            bytes_up: 0,
            bytes_down: 0,
            key_bytes: 0,
            registrations: 0,
            dropouts: 0,
            joins: 0,
            crypto_messages: 0,
            noise_std: 0.0,
            epsilon_spent: 0.0,
            f1: None,
            oracle_max_abs_diff: None,
            responder_slots: Vec::new(),
        }
    }

    pub fn completed(&self) -> bool {
        self.status == EpochStatus::Completed
    }
}

/// Wall-clock seconds per phase. Kept apart from [`EpochMetrics`] because
/// they vary between runs.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EpochTimings {
    pub epoch: u32,
    pub train_s: f64,
    pub encrypt_s: f64,
    pub key_s: f64,
    pub decrypt_s: f64,
    pub total_s: f64,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub baseline: Baseline,
    pub final_model: ModelVector,
    pub epochs: Vec<EpochMetrics>,
    pub timings: Vec<EpochTimings>,
    pub trace: Vec<TraceEntry>,
    /// Key distributions performed before the first epoch.
    pub setup_registrations: usize,
    /// Digest of the master key and every issued share: after setup, then
    /// after each epoch. Empty for plaintext baselines.
    pub key_digests: Vec<[u8; 32]>,
    /// Slot assigned to each participant, by participant index. Slots follow
    /// registration arrival order, so they need not match the indices.
    pub slots: Vec<Option<usize>>,
    /// Local-DP standard deviation; zero when noise is off.
    pub sigma: f64,
}

impl RunReport {
    pub fn completed_epochs(&self) -> usize {
        self.epochs.iter().filter(|e| e.completed()).count()
    }

    pub fn last_f1(&self) -> Option<f64> {
        self.epochs.iter().rev().find_map(|e| e.f1)
    }

    /// Crypto messages of a run made of setup plus the given epoch, for
    /// comparison with [`crypto_message_total`].
    pub fn single_epoch_crypto_messages(&self, epoch: u32) -> Option<usize> {
        let e = self.epochs.iter().find(|e| e.epoch == epoch)?;
        Some(self.setup_registrations + e.key_requests + e.ct_uploads)
    }

    pub fn write_metrics_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for e in &self.epochs {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_timings_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for t in &self.timings {
            w.serialize(t)?;
        }
        w.flush()?;
        Ok(())
    }

    /// One weight per line.
    pub fn write_final_model(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for v in self.final_model.weights() {
            writeln!(w, "{v:e}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_trace(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for e in &self.trace {
            writeln!(w, "{e}")?;
        }
        w.flush()?;
        Ok(())
    }
}
