//! Aggregator, participant and authority actors driven by one event loop.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::{EpochMetrics, EpochStatus, EpochTimings, RunReport};
use super::network::{units_to_ticks, LatencyModel, NodeId, SimNetwork, SimTime, TraceEvent};
use crate::dp::{privatize, DpParams, DEFAULT_DELTA};
use crate::error::{Error, Result};
use crate::fixedpoint::FixedPointCodec;
use crate::group::{DlogSolver, GroupParams, DEFAULT_SECURITY_BITS};
use crate::learning::{plaintext_fedavg, DatasetShard, ModelVector, TrainConfig, Trainer};
use crate::mife::{decrypt, NonceMode, PublicKeyShare, SlotCiphertext};
use crate::tpa::{KeyRegistry, TpaRequest, TpaResponse, TpaService, WeightedVector};

/// Default dlog table half-width for simulations.
pub const DEFAULT_SIM_TABLE_BOUND: u64 = 1 << 17;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Baseline {
    /// Plaintext averaging, no noise.
    #[serde(rename = "none")]
    NoPrivacy,
    /// Plaintext averaging, every participant adds full local-DP noise.
    #[serde(rename = "local-dp")]
    LocalDp,
    /// Encrypted averaging, no noise.
    #[serde(rename = "no-dp")]
    HybridNoDp,
    /// Encrypted averaging with noise split across `t` participants.
    #[default]
    #[serde(rename = "dp")]
    HybridDp,
}

impl Baseline {
    pub const ALL: [Baseline; 4] = [Baseline::NoPrivacy, Baseline::LocalDp, Baseline::HybridNoDp, Baseline::HybridDp];

    pub fn encrypted(self) -> bool {
        matches!(self, Baseline::HybridNoDp | Baseline::HybridDp)
    }

    pub fn noisy(self) -> bool {
        matches!(self, Baseline::LocalDp | Baseline::HybridDp)
    }

    pub fn name(self) -> &'static str {
        match self {
            Baseline::NoPrivacy => "none",
            Baseline::LocalDp => "local-dp",
            Baseline::HybridNoDp => "no-dp",
            Baseline::HybridDp => "dp",
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Baseline::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown baseline `{s}` (none|local-dp|no-dp|dp)")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    pub epochs: u32,
    pub epsilon: f64,
    pub delta: f64,
    pub clip: f64,
    /// Quorum and assumed number of honest participants.
    pub threshold: u32,
    /// Simulated time units to wait for responses.
    pub max_wait: f64,
    pub capacity: usize,
    pub precision: u32,
    pub mode: NonceMode,
    pub seed: u64,
    pub security_bits: u32,
    /// Seed for group generation; defaults to `seed` except at 2048 bits,
    /// where the fixed RFC 3526 group is used.
    pub group_seed: Option<u64>,
    pub baseline: Baseline,
    pub train: TrainConfig,
    pub latency: LatencyModel,
    /// Assumed bound on any transmitted weight, used to size the dlog search.
    pub value_bound: f64,
    pub dlog_table_bound: Option<u64>,
    /// Track the plaintext average alongside decryption.
    pub record_oracle: bool,
    pub require_honest_majority: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            epsilon: 0.5,
            delta: DEFAULT_DELTA,
            clip: 4.0,
            threshold: 5,
            max_wait: 10.0,
            capacity: 64,
            precision: crate::fixedpoint::DEFAULT_PRECISION,
            mode: NonceMode::PerCoordinate,
            seed: 0,
            security_bits: DEFAULT_SECURITY_BITS,
            group_seed: None,
            baseline: Baseline::HybridDp,
            train: TrainConfig::default(),
            latency: LatencyModel::default(),
            value_bound: 1024.0,
            dlog_table_bound: None,
            record_oracle: false,
            require_honest_majority: false,
        }
    }
}

impl TrainingConfig {
    /// DP parameters for the configured baseline, if it adds noise.
    pub fn dp_params(&self) -> Result<Option<DpParams>> {
        let t = match self.baseline {
            Baseline::NoPrivacy | Baseline::HybridNoDp => return Ok(None),
            Baseline::LocalDp => 1,
            Baseline::HybridDp => self.threshold,
        };
        DpParams::new(self.epsilon, self.delta, self.clip, t).map(Some)
    }

    pub fn group(&self) -> Result<GroupParams> {
        match self.group_seed {
            None if self.security_bits == DEFAULT_SECURITY_BITS => GroupParams::setup(self.security_bits, None),
            seed => GroupParams::setup(self.security_bits, Some(seed.unwrap_or(self.seed))),
        }
    }

    fn validate(&self, initial: usize, total: usize) -> Result<()> {
        if self.threshold == 0 {
            return Err(Error::Config("threshold t must be at least 1".into()));
        }
        if self.threshold as usize > initial {
            return Err(Error::Config(format!(
                "threshold {} exceeds the {initial} initial participants",
                self.threshold
            )));
        }
        if self.baseline.encrypted() && total > self.capacity {
            return Err(Error::Config(format!("{total} participants exceed the key capacity {}", self.capacity)));
        }
        if !(self.value_bound > 0.0) {
            return Err(Error::Config("value_bound must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Participant {
    pub id: String,
    pub shard: DatasetShard,
}

/// Offline for epochs `epoch .. epoch + duration`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropoutRule {
    pub epoch: u32,
    pub participants: Vec<usize>,
    #[serde(default = "one")]
    pub duration: u32,
}

/// Extra one-way latency for epochs `epoch .. epoch + duration`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayRule {
    pub epoch: u32,
    pub participants: Vec<usize>,
    /// Simulated time units.
    pub extra: f64,
    #[serde(default = "one")]
    pub duration: u32,
}

/// `count` new participants register after epoch `epoch` completes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JoinRule {
    pub epoch: u32,
    pub count: usize,
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Schedule {
    pub dropouts: Vec<DropoutRule>,
    pub delays: Vec<DelayRule>,
    pub joins: Vec<JoinRule>,
}

impl Schedule {
    pub fn joining(&self) -> usize {
        self.joins.iter().map(|j| j.count).sum()
    }

    fn offline_in(&self, epoch: u32) -> BTreeSet<usize> {
        self.dropouts
            .iter()
            .filter(|r| (r.epoch..r.epoch + r.duration).contains(&epoch))
            .flat_map(|r| r.participants.iter().copied())
            .collect()
    }

    fn delays_in(&self, epoch: u32) -> BTreeMap<usize, f64> {
        let mut out = BTreeMap::new();
        for r in self.delays.iter().filter(|r| (r.epoch..r.epoch + r.duration).contains(&epoch)) {
            for &p in &r.participants {
                *out.entry(p).or_insert(0.0) += r.extra;
            }
        }
        out
    }
}

/// Everything the participants and the aggregator start from.
#[derive(Clone, Debug)]
pub struct TrainingInputs {
    pub trainer: Trainer,
    pub initial_model: ModelVector,
    /// Initial participants first, then joiners in join order.
    pub participants: Vec<Participant>,
    pub test_set: Option<DatasetShard>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryMessage {
    pub epoch: u32,
    pub learning_spec: String,
    pub party_count: usize,
    pub global_model: Vec<f64>,
}

impl QueryMessage {
    fn bytes(&self) -> usize {
        4 + 4 + self.learning_spec.len() + 4 + 8 * self.global_model.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Cipher(SlotCiphertext),
    Plain(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResponseMessage {
    pub epoch: u32,
    pub slot_index: usize,
    pub payload: Payload,
}

impl ResponseMessage {
    fn bytes(&self) -> usize {
        8 + match &self.payload {
            Payload::Cipher(ct) => ct.encoded_len(),
            Payload::Plain(v) => 8 * v.len(),
        }
    }
}

#[derive(Clone, Debug)]
enum Msg {
    Register(TpaRequest),
    Share(Box<TpaResponse>),
    Query(Arc<QueryMessage>),
    Response(Box<ResponseMessage>),
    KeyRequest(TpaRequest),
    KeyResponse(Box<TpaResponse>),
}

const STREAM_TRAIN: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_ENCRYPT: u64 = 3;
const STREAM_KEYS: u64 = 4;
const STREAM_NET: u64 = 5;

/// Splitmix-style derivation of independent stream seeds.
fn stream_seed(seed: u64, participant: u64, epoch: u64, stream: u64) -> u64 {
    let mut z = seed;
    for v in [participant, epoch, stream] {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(v.wrapping_mul(0xd1b5_4a32_d192_ed03));
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

struct ParticipantState {
    id: String,
    shard: DatasetShard,
    share: Option<PublicKeyShare>,
    joined: bool,
}

struct Sim<'a> {
    config: &'a TrainingConfig,
    trainer: Trainer,
    learning_spec: String,
    dp: Option<DpParams>,
    codec: Option<FixedPointCodec>,
    tpa: Option<TpaService>,
    net: SimNetwork<Msg>,
    participants: Vec<ParticipantState>,
    /// Plaintext vectors as sent, kept only for the oracle comparison.
    sent_plain: BTreeMap<usize, Vec<f64>>,
    train_time: f64,
    encrypt_time: f64,
}

/// What the aggregator sees from one delivery.
enum Inbox {
    Response(Box<ResponseMessage>),
    Key(Box<TpaResponse>),
    Nothing,
}

impl<'a> Sim<'a> {
    fn dispatch(&mut self, env: super::network::Envelope<Msg>) -> Result<Inbox> {
        match (env.to, env.msg) {
            (NodeId::Tpa, Msg::Register(req)) => {
                let tpa = self.tpa.as_mut().ok_or_else(|| Error::Protocol("no key authority".into()))?;
                let resp = tpa.handle(req);
                let bytes = resp.payload_bytes();
                self.net.send(NodeId::Tpa, env.from, "share", bytes, Msg::Share(Box::new(resp)));
                Ok(Inbox::Nothing)
            }
            (NodeId::Tpa, Msg::KeyRequest(req)) => {
                let tpa = self.tpa.as_mut().ok_or_else(|| Error::Protocol("no key authority".into()))?;
                let resp = tpa.handle(req);
                let bytes = resp.payload_bytes();
                self.net.send(NodeId::Tpa, env.from, "key-response", bytes, Msg::KeyResponse(Box::new(resp)));
                Ok(Inbox::Nothing)
            }
            (NodeId::Participant(i), Msg::Share(resp)) => match *resp {
                TpaResponse::Share(share) => {
                    self.participants[i].share = Some(share);
                    Ok(Inbox::Nothing)
                }
                other => Err(Error::Protocol(format!("registration of {} failed: {other:?}", self.participants[i].id))),
            },
            (NodeId::Participant(i), Msg::Query(q)) => {
                let resp = self.participant_step(i, &q)?;
                let bytes = resp.bytes();
                self.net.send(NodeId::Participant(i), NodeId::Aggregator, "response", bytes, Msg::Response(Box::new(resp)));
                Ok(Inbox::Nothing)
            }
            (NodeId::Aggregator, Msg::Response(r)) => Ok(Inbox::Response(r)),
            (NodeId::Aggregator, Msg::KeyResponse(r)) => Ok(Inbox::Key(r)),
            (to, _) => Err(Error::Protocol(format!("unexpected message for {to}"))),
        }
    }

    fn participant_step(&mut self, i: usize, q: &QueryMessage) -> Result<ResponseMessage> {
        let config = self.config;
        let p = &self.participants[i];
        let global = ModelVector::new(q.global_model.clone(), self.trainer.arch().layout())?;
        let started = Instant::now();
        let train_seed = stream_seed(config.seed, i as u64, q.epoch as u64, STREAM_TRAIN);
        let local = self.trainer.local_train(&global, &p.shard, &config.train, train_seed)?;
        let sent: Vec<f64> = match &self.dp {
            Some(dp) => {
                let delta: Vec<f64> = local.weights().iter().zip(global.weights()).map(|(l, g)| l - g).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(config.seed, i as u64, q.epoch as u64, STREAM_NOISE));
                let noisy = privatize(&delta, dp, &mut rng);
                global.weights().iter().zip(noisy).map(|(g, d)| g + d).collect()
            }
            None => local.into_weights(),
        };
        self.train_time += started.elapsed().as_secs_f64();

        let started = Instant::now();
        let (slot_index, payload) = match (&self.codec, &p.share) {
            (Some(codec), Some(share)) => {
                let enc = codec.encode_vector(&sent)?;
                let mut rng = ChaCha20Rng::seed_from_u64(stream_seed(config.seed, i as u64, q.epoch as u64, STREAM_ENCRYPT));
                let ct = share.encrypt(&enc, config.mode, &mut rng)?;
                (share.slot_index(), Payload::Cipher(ct))
            }
            (Some(_), None) => return Err(Error::Protocol(format!("{} was queried without a key", p.id))),
            (None, _) => (i, Payload::Plain(sent.clone())),
        };
        self.encrypt_time += started.elapsed().as_secs_f64();
        if config.record_oracle {
            self.sent_plain.insert(slot_index, sent);
        }
        Ok(ResponseMessage { epoch: q.epoch, slot_index, payload })
    }

    /// Registers participants `indices` and waits for their shares.
    /// Registers `indices` with the authority and returns those that received
    /// their share. Offline participants lose their request and stay out.
    fn register(&mut self, indices: &[usize]) -> Result<Vec<usize>> {
        if self.tpa.is_none() {
            for &i in indices {
                self.participants[i].joined = true;
            }
            return Ok(indices.to_vec());
        }
        for &i in indices {
            let req = TpaRequest::Register { participant_id: self.participants[i].id.clone() };
            let bytes = req.payload_bytes();
            self.net.send(NodeId::Participant(i), NodeId::Tpa, "register", bytes, Msg::Register(req));
        }
        while indices.iter().any(|&i| self.participants[i].share.is_none()) {
            let Some(env) = self.net.next() else { break };
            if let Inbox::Response(_) = self.dispatch(env)? {
                // a straggler from an earlier epoch
            }
        }
        let done: Vec<usize> = indices.iter().copied().filter(|&i| self.participants[i].share.is_some()).collect();
        for &i in &done {
            self.participants[i].joined = true;
        }
        Ok(done)
    }

    fn key_state_digest(&self) -> Option<[u8; 32]> {
        let tpa = self.tpa.as_ref()?;
        let mut h = Sha256::new();
        h.update(tpa.registry().master().digest());
        for p in &self.participants {
            if let Some(s) = &p.share {
                h.update(s.digest());
            }
        }
        Some(h.finalize().into())
    }
}

/// Runs every epoch of federated training over the simulated network.
pub fn run_training(config: &TrainingConfig, inputs: TrainingInputs, schedule: &Schedule) -> Result<RunReport> {
    let total = inputs.participants.len();
    let initial = total
        .checked_sub(schedule.joining())
        .ok_or_else(|| Error::Config("join schedule needs more participants than were provided".into()))?;
    config.validate(initial, total)?;
    inputs.trainer.arch().check(&inputs.initial_model)?;
    let dp = config.dp_params()?;

    let (tpa, codec) = if config.baseline.encrypted() {
        let params = config.group()?;
        let mut rng = ChaCha20Rng::seed_from_u64(stream_seed(config.seed, u64::MAX, 0, STREAM_KEYS));
        let registry = KeyRegistry::with_group(&params, config.capacity, config.threshold, &mut rng)?;
        if config.require_honest_majority {
            registry.check_honest_majority(initial)?;
        }
        let codec = FixedPointCodec::new(config.precision, params.order().clone())?;
        (Some(TpaService::new(registry)), Some(codec))
    } else {
        (None, None)
    };

    let mut sim = Sim {
        config,
        learning_spec: format!("{:?} {:?}", inputs.trainer.arch(), config.train),
        trainer: inputs.trainer,
        dp,
        codec,
        tpa,
        net: SimNetwork::new(config.latency, stream_seed(config.seed, u64::MAX, 0, STREAM_NET)),
        participants: inputs
            .participants
            .into_iter()
            .map(|p| ParticipantState { id: p.id, shard: p.shard, share: None, joined: false })
            .collect(),
        sent_plain: BTreeMap::new(),
        train_time: 0.0,
        encrypt_time: 0.0,
    };

    let setup = sim.register(&(0..initial).collect::<Vec<_>>())?;
    if setup.len() < initial {
        return Err(Error::Protocol("setup registration messages were lost".into()));
    }
    let setup_registrations = if sim.tpa.is_some() { setup.len() } else { 0 };
    let mut key_digests: Vec<[u8; 32]> = sim.key_state_digest().into_iter().collect();
    let mut solver: Option<DlogSolver> = None;
    let mut global = inputs.initial_model;
    let mut next_joiner = initial;
    let mut pending_joiners: Vec<usize> = Vec::new();
    let mut epochs = Vec::with_capacity(config.epochs as usize);
    let mut timings = Vec::with_capacity(config.epochs as usize);
    let mut completed = 0u32;
    let max_wait: SimTime = units_to_ticks(config.max_wait);

    for epoch in 1..=config.epochs {
        let epoch_started = Instant::now();
        let trace_mark = sim.net.trace().len();
        let mut m = EpochMetrics::new(epoch);
        let mut tm = EpochTimings { epoch, ..Default::default() };
        sim.train_time = 0.0;
        sim.encrypt_time = 0.0;
        sim.sent_plain.clear();

        let offline = schedule.offline_in(epoch);
        let delays = schedule.delays_in(epoch);
        for i in 0..sim.participants.len() {
            let node = NodeId::Participant(i);
            sim.net.set_online(node, !offline.contains(&i));
            sim.net.set_extra_delay(node, delays.get(&i).map_or(0, |&d| units_to_ticks(d)));
        }

        let eligible: Vec<usize> = (0..sim.participants.len()).filter(|&i| sim.participants[i].joined).collect();
        m.registered = eligible.len();
        m.dropouts = eligible.iter().filter(|i| offline.contains(i)).count();
        let query = Arc::new(QueryMessage {
            epoch,
            learning_spec: sim.learning_spec.clone(),
            party_count: eligible.len(),
            global_model: global.weights().to_vec(),
        });
        for &i in &eligible {
            sim.net.send(NodeId::Aggregator, NodeId::Participant(i), "query", query.bytes(), Msg::Query(query.clone()));
        }
        m.queries_sent = eligible.len();

        // wait until everyone queried has answered or the window closes
        let deadline = sim.net.now() + max_wait;
        let mut responses: BTreeMap<usize, ResponseMessage> = BTreeMap::new();
        while responses.len() < eligible.len() {
            let Some(env) = sim.net.next_before(deadline) else { break };
            if let Inbox::Response(r) = sim.dispatch(env)? {
                if r.epoch == epoch && !responses.contains_key(&r.slot_index) {
                    responses.insert(r.slot_index, *r);
                } else {
                    m.stale_responses += 1;
                }
            }
        }
        m.responses_received = responses.len();
        m.responder_slots = responses.keys().copied().collect();
        tm.train_s = sim.train_time;
        tm.encrypt_s = sim.encrypt_time;

        if responses.len() >= config.threshold as usize {
            m.ct_uploads = if sim.tpa.is_some() { responses.len() } else { 0 };
            let slots: Vec<usize> = responses.keys().copied().collect();
            let averaged = if sim.tpa.is_some() {
                let started = Instant::now();
                let weights = WeightedVector::uniform_over(m.registered.max(slots.len()), &slots)?;
                let req = TpaRequest::FunctionKey { weights };
                let bytes = req.payload_bytes();
                sim.net.send(NodeId::Aggregator, NodeId::Tpa, "key-request", bytes, Msg::KeyRequest(req));
                m.key_requests += 1;
                let key = loop {
                    let Some(env) = sim.net.next() else {
                        return Err(Error::Protocol("key request was lost".into()));
                    };
                    match sim.dispatch(env)? {
                        Inbox::Key(k) => break *k,
                        Inbox::Response(_) => m.stale_responses += 1,
                        Inbox::Nothing => {}
                    }
                };
                tm.key_s = started.elapsed().as_secs_f64();
                match key {
                    TpaResponse::Key(fk) => {
                        let started = Instant::now();
                        let cts: Vec<SlotCiphertext> = responses
                            .values()
                            .map(|r| match &r.payload {
                                Payload::Cipher(ct) => Ok(ct.clone()),
                                Payload::Plain(_) => Err(Error::Protocol("plaintext response in an encrypted run".into())),
                            })
                            .collect::<Result<_>>()?;
                        let solver = match &solver {
                            Some(s) => s,
                            None => solver.insert(build_solver(config, sim.tpa.as_ref().expect("encrypted run").registry().params())?),
                        };
                        let sums = decrypt(&cts, &fk, solver)?;
                        let codec = sim.codec.as_ref().expect("encrypted run");
                        let avg = codec.decode_average(&sums, slots.len())?;
                        tm.decrypt_s = started.elapsed().as_secs_f64();
                        Some(avg)
                    }
                    TpaResponse::Rejected(_) => {
                        m.status = EpochStatus::Rejected;
                        None
                    }
                    TpaResponse::Failed(msg) => return Err(Error::Protocol(msg)),
                    TpaResponse::Share(_) => return Err(Error::Protocol("authority answered a key request with a share".into())),
                }
            } else {
                let models: Vec<ModelVector> = responses
                    .values()
                    .map(|r| match &r.payload {
                        Payload::Plain(v) => global.with_weights(v.clone()),
                        Payload::Cipher(_) => Err(Error::Protocol("ciphertext in a plaintext run".into())),
                    })
                    .collect::<Result<_>>()?;
                let all: Vec<usize> = (0..models.len()).collect();
                Some(plaintext_fedavg(&models, &all)?.into_weights())
            };
            if let Some(avg) = averaged {
                if config.record_oracle {
                    let models: Vec<ModelVector> = slots
                        .iter()
                        .map(|s| global.with_weights(sim.sent_plain[s].clone()))
                        .collect::<Result<_>>()?;
                    let all: Vec<usize> = (0..models.len()).collect();
                    let oracle = plaintext_fedavg(&models, &all)?;
                    let diff = oracle.weights().iter().zip(&avg).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    m.oracle_max_abs_diff = Some(diff);
                }
                global = global.with_weights(avg)?;
                m.status = EpochStatus::Completed;
                completed += 1;
            }
        }

        // joins take effect after this epoch; nothing is sent to existing participants.
        // A joiner that is offline now retries after the next epoch.
        let join_count: usize = schedule.joins.iter().filter(|j| j.epoch == epoch).map(|j| j.count).sum();
        pending_joiners.extend(next_joiner..next_joiner + join_count);
        next_joiner += join_count;
        let joined = sim.register(&pending_joiners)?;
        pending_joiners.retain(|i| !joined.contains(i));
        m.joins = joined.len();
        m.registrations = if sim.tpa.is_some() { joined.len() } else { 0 };

        if let Some(dp) = &sim.dp {
            m.noise_std = dp.participant_std();
            m.epsilon_spent = dp.composed(completed).0;
        }
        if let Some(test) = &inputs.test_set {
            m.f1 = Some(sim.trainer.evaluate_f1(&global, test));
        }
        for e in &sim.net.trace()[trace_mark..] {
            if e.event != TraceEvent::Sent {
                continue;
            }
            match (e.from, e.to) {
                (NodeId::Participant(_), _) => m.bytes_up += e.bytes,
                (_, NodeId::Participant(_)) => m.bytes_down += e.bytes,
                _ => m.key_bytes += e.bytes,
            }
        }
        if m.completed() {
            m.ct_bytes_initial = responses
                .values()
                .map(|r| match &r.payload {
                    Payload::Cipher(ct) => ct.encoded_len(),
                    Payload::Plain(_) => 0,
                })
                .sum();
        }
        m.crypto_messages = m.registrations + m.key_requests + m.ct_uploads;
        key_digests.extend(sim.key_state_digest());
        tm.total_s = epoch_started.elapsed().as_secs_f64();
        epochs.push(m);
        timings.push(tm);
    }

    let report = RunReport {
        baseline: config.baseline,
        final_model: global,
        epochs,
        timings,
        trace: sim.net.take_trace(),
        setup_registrations,
        key_digests,
        slots: sim.participants.iter().map(|p| p.share.as_ref().map(|s| s.slot_index())).collect(),
        sigma: sim.dp.map_or(0.0, |d| d.sigma()),
    };
    if completed == 0 && config.epochs > 0 {
        return Err(Error::TrainingFailed(Box::new(report)));
    }
    Ok(report)
}

fn build_solver(config: &TrainingConfig, params: &GroupParams) -> Result<DlogSolver> {
    let scale = 10f64.powi(config.precision as i32);
    let fallback = (config.capacity as f64 * config.value_bound * scale).min((i64::MAX / 4) as f64) as u64;
    let table = config.dlog_table_bound.unwrap_or(DEFAULT_SIM_TABLE_BOUND).min(fallback);
    DlogSolver::with_bounds(params, table, fallback)
}
