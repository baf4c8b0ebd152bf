//! The key authority: owns the master keys, hands out per-participant public
//! keys and issues function keys only for weight vectors that pass the
//! inference-prevention filter.

use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::GroupParams;
use crate::mife::{FunctionKey, MasterKeys, PublicKeyShare, SlotAssignments};

/// Averaging weights over slots as integer numerators over a common denominator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightedVector {
    numerators: Vec<u64>,
    denominator: u64,
}

impl WeightedVector {
    pub fn new(numerators: Vec<u64>, denominator: u64) -> Result<Self> {
        if denominator == 0 {
            return Err(Error::Argument("weight denominator must be nonzero".into()));
        }
        Ok(Self { numerators, denominator })
    }

    /// `1/|slots|` on each listed slot, zero elsewhere.
    pub fn uniform_over(len: usize, slots: &[usize]) -> Result<Self> {
        let mut numerators = vec![0; len];
        for &s in slots {
            let n = numerators
                .get_mut(s)
                .ok_or_else(|| Error::Argument(format!("slot {s} outside a vector of length {len}")))?;
            *n = 1;
        }
        let count = numerators.iter().filter(|&&n| n != 0).count() as u64;
        Self::new(numerators, count.max(1))
    }

    /// Unit weight on `slot` only.
    pub fn singling_out(len: usize, slot: usize) -> Result<Self> {
        Self::uniform_over(len, &[slot])
    }

    pub fn numerators(&self) -> &[u64] {
        &self.numerators
    }

    pub fn denominator(&self) -> u64 {
        self.denominator
    }

    pub fn len(&self) -> usize {
        self.numerators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.numerators.is_empty()
    }

    pub fn nonzero_slots(&self) -> impl Iterator<Item = usize> + '_ {
        self.numerators.iter().enumerate().filter(|(_, &n)| n != 0).map(|(i, _)| i)
    }

    pub fn nonzero_count(&self) -> usize {
        self.numerators.iter().filter(|&&n| n != 0).count()
    }

    /// 0/1 vector marking the nonzero slots.
    pub fn indicator(&self) -> Vec<i64> {
        self.numerators.iter().map(|&n| i64::from(n != 0)).collect()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.numerators.iter().map(|&n| n as f64 / self.denominator as f64).collect()
    }

    fn encoded_len(&self) -> usize {
        4 + 8 * self.numerators.len() + 8
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum RejectReason {
    TooFewNonzero { nonzero: usize, threshold: u32 },
    NonUniform { slot: usize },
}

impl RejectReason {
    pub fn code(&self) -> &'static str {
        match self {
            RejectReason::TooFewNonzero { .. } => "too-few-nonzero",
            RejectReason::NonUniform { .. } => "non-uniform",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::TooFewNonzero { nonzero, threshold } => {
                write!(f, "too-few-nonzero ({nonzero} nonzero weights, threshold {threshold})")
            }
            RejectReason::NonUniform { slot } => write!(f, "non-uniform (slot {slot})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterVerdict {
    Accept,
    Reject(RejectReason),
}

impl FilterVerdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, FilterVerdict::Accept)
    }
}

/// Accepts iff at least `threshold` weights are nonzero and each nonzero
/// weight equals `1/c_nz`.
pub fn inference_prevention_filter(w: &WeightedVector, threshold: u32) -> FilterVerdict {
    let c_nz = w.nonzero_count();
    if c_nz < threshold as usize {
        return FilterVerdict::Reject(RejectReason::TooFewNonzero { nonzero: c_nz, threshold });
    }
    for slot in w.nonzero_slots() {
        if u128::from(w.numerators[slot]) * c_nz as u128 != u128::from(w.denominator) {
            return FilterVerdict::Reject(RejectReason::NonUniform { slot });
        }
    }
    FilterVerdict::Accept
}

#[derive(Debug)]
pub struct KeyRegistry {
    master: MasterKeys,
    slots: SlotAssignments,
    threshold: u32,
}

impl KeyRegistry {
    /// Generates a group and master keys for `capacity` slots. A seed makes
    /// both the group and the keys reproducible.
    pub fn init(security_bits: u32, capacity: usize, threshold: u32, seed: Option<u64>) -> Result<Self> {
        Self::check_threshold(threshold)?;
        let params = GroupParams::setup(security_bits, seed)?;
        let mut rng = match seed {
            Some(s) => ChaCha20Rng::seed_from_u64(s ^ 0x6b65_7973),
            None => ChaCha20Rng::from_os_rng(),
        };
        Self::with_group(&params, capacity, threshold, &mut rng)
    }

    pub fn with_group<R: RngCore>(params: &GroupParams, capacity: usize, threshold: u32, rng: &mut R) -> Result<Self> {
        Self::check_threshold(threshold)?;
        let master = MasterKeys::setup(params, capacity, rng)?;
        Ok(Self { master, slots: SlotAssignments::new(capacity), threshold })
    }

    fn check_threshold(threshold: u32) -> Result<()> {
        if threshold == 0 {
            return Err(Error::Config("threshold t must be at least 1".into()));
        }
        Ok(())
    }

    /// Errors unless `t >= floor(n/2) + 1` for `n` participants.
    pub fn check_honest_majority(&self, participants: usize) -> Result<()> {
        let need = participants / 2 + 1;
        if (self.threshold as usize) < need {
            return Err(Error::Config(format!(
                "threshold {} is below the honest majority {need} of {participants} participants",
                self.threshold
            )));
        }
        Ok(())
    }

    pub fn register(&mut self, participant_id: &str) -> Result<PublicKeyShare> {
        self.master.pk_distribute(&mut self.slots, participant_id)
    }

    /// Runs the filter, then derives the key for the 0/1 indicator of the
    /// accepted slots. Division by `c_nz` is left to decoding.
    pub fn request_function_key(&self, w: &WeightedVector) -> Result<FunctionKey> {
        if let FilterVerdict::Reject(reason) = inference_prevention_filter(w, self.threshold) {
            return Err(Error::Rejected(reason));
        }
        if let Some(slot) = w.nonzero_slots().find(|&s| !self.slots.is_assigned(s)) {
            return Err(Error::Protocol(format!("weight on unassigned slot {slot}")));
        }
        self.master.sk_generate(&w.indicator())
    }

    pub fn threshold(&self) -> u32 {
        self.threshold
    }

    pub fn capacity(&self) -> usize {
        self.master.capacity()
    }

    pub fn registered(&self) -> usize {
        self.slots.len()
    }

    pub fn slot_of(&self, participant_id: &str) -> Option<usize> {
        self.slots.slot_of(participant_id)
    }

    pub fn assignments(&self) -> &SlotAssignments {
        &self.slots
    }

    pub fn master(&self) -> &MasterKeys {
        &self.master
    }

    pub fn params(&self) -> &GroupParams {
        self.master.params()
    }
}

/// Same as [`KeyRegistry::init`].
pub fn tpa_init(security_bits: u32, capacity: usize, threshold: u32, seed: Option<u64>) -> Result<KeyRegistry> {
    KeyRegistry::init(security_bits, capacity, threshold, seed)
}

#[derive(Clone, Debug)]
pub enum TpaRequest {
    Register { participant_id: String },
    FunctionKey { weights: WeightedVector },
}

impl TpaRequest {
    pub fn payload_bytes(&self) -> usize {
        match self {
            TpaRequest::Register { participant_id } => 4 + participant_id.len(),
            TpaRequest::FunctionKey { weights } => weights.encoded_len(),
        }
    }
}

#[derive(Clone, Debug)]
pub enum TpaResponse {
    Share(PublicKeyShare),
    Key(FunctionKey),
    Rejected(RejectReason),
    Failed(String),
}

impl TpaResponse {
    pub fn payload_bytes(&self) -> usize {
        match self {
            TpaResponse::Share(s) => s.encoded_len(),
            TpaResponse::Key(k) => k.encoded_len(),
            TpaResponse::Rejected(_) => 16,
            TpaResponse::Failed(msg) => 4 + msg.len(),
        }
    }
}

/// Message-level front end so the simulator can count TPA traffic.
#[derive(Debug)]
pub struct TpaService {
    registry: KeyRegistry,
}

impl TpaService {
    pub fn new(registry: KeyRegistry) -> Self {
        Self { registry }
    }

    pub fn registry(&self) -> &KeyRegistry {
        &self.registry
    }

    pub fn handle(&mut self, req: TpaRequest) -> TpaResponse {
        let result = match req {
            TpaRequest::Register { participant_id } => self.registry.register(&participant_id).map(TpaResponse::Share),
            TpaRequest::FunctionKey { weights } => {
                self.registry.request_function_key(&weights).map(TpaResponse::Key)
            }
        };
        match result {
            Ok(r) => r,
            Err(Error::Rejected(reason)) => TpaResponse::Rejected(reason),
            Err(e) => TpaResponse::Failed(e.to_string()),
        }
    }
}
