//! Deterministic discrete-event message bus with a virtual clock.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Virtual time in ticks.
pub type SimTime = u64;

pub const TICKS_PER_UNIT: u64 = 1000;

pub fn units_to_ticks(units: f64) -> SimTime {
    (units.max(0.0) * TICKS_PER_UNIT as f64).round() as SimTime
}

pub fn ticks_to_units(ticks: SimTime) -> f64 {
    ticks as f64 / TICKS_PER_UNIT as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeId {
    Aggregator,
    Tpa,
    Participant(usize),
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Aggregator => f.write_str("aggregator"),
            NodeId::Tpa => f.write_str("tpa"),
            NodeId::Participant(i) => write!(f, "p{i}"),
        }
    }
}

/// Per-message latency drawn uniformly from `[base, base + jitter]` ticks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub base: SimTime,
    pub jitter: SimTime,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self { base: 50, jitter: 50 }
    }
}

impl LatencyModel {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SimTime {
        self.base + if self.jitter == 0 { 0 } else { rng.random_range(0..=self.jitter) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceEvent {
    Sent,
    Delivered,
    Dropped,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub time: SimTime,
    pub event: TraceEvent,
    pub from: NodeId,
    pub to: NodeId,
    pub kind: String,
    pub bytes: usize,
    /// Send sequence number, shared by all events of one message.
    pub seq: u64,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:?} #{} {} -> {} {} {}B",
            self.time, self.event, self.seq, self.from, self.to, self.kind, self.bytes
        )
    }
}

#[derive(Clone, Debug)]
pub struct Envelope<M> {
    pub from: NodeId,
    pub to: NodeId,
    pub sent_at: SimTime,
    pub deliver_at: SimTime,
    pub seq: u64,
    pub kind: String,
    pub bytes: usize,
    pub msg: M,
}

struct Pending<M>(Envelope<M>);

impl<M> PartialEq for Pending<M> {
    fn eq(&self, other: &Self) -> bool {
        self.0.seq == other.0.seq
    }
}

impl<M> Eq for Pending<M> {}

impl<M> PartialOrd for Pending<M> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<M> Ord for Pending<M> {
    // min-heap on (deliver_at, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.deliver_at, other.0.seq).cmp(&(self.0.deliver_at, self.0.seq))
    }
}

/// At-most-once, in-order-per-channel delivery. Offline nodes neither send
/// nor receive; a per-node extra delay models stragglers.
pub struct SimNetwork<M> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Pending<M>>,
    last_delivery: BTreeMap<(NodeId, NodeId), SimTime>,
    offline: BTreeSet<NodeId>,
    extra_delay: BTreeMap<NodeId, SimTime>,
    latency: LatencyModel,
    rng: ChaCha8Rng,
    trace: Vec<TraceEntry>,
}

impl<M> SimNetwork<M> {
    pub fn new(latency: LatencyModel, seed: u64) -> Self {
        Self {
            now: 0,
            next_seq: 0,
            queue: BinaryHeap::new(),
            last_delivery: BTreeMap::new(),
            offline: BTreeSet::new(),
            extra_delay: BTreeMap::new(),
            latency,
            rng: ChaCha8Rng::seed_from_u64(seed),
            trace: Vec::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Moves the clock forward; never backward.
    pub fn advance_to(&mut self, t: SimTime) {
        self.now = self.now.max(t);
    }

    pub fn set_online(&mut self, node: NodeId, online: bool) {
        if online {
            self.offline.remove(&node);
        } else {
            self.offline.insert(node);
        }
    }

    pub fn is_online(&self, node: NodeId) -> bool {
        !self.offline.contains(&node)
    }

    pub fn set_extra_delay(&mut self, node: NodeId, ticks: SimTime) {
        if ticks == 0 {
            self.extra_delay.remove(&node);
        } else {
            self.extra_delay.insert(node, ticks);
        }
    }

    /// Queues a message. Returns `false` if the sender is offline.
    pub fn send(&mut self, from: NodeId, to: NodeId, kind: &str, bytes: usize, msg: M) -> bool {
        let seq = self.next_seq;
        self.next_seq += 1;
        let mut entry = TraceEntry { time: self.now, event: TraceEvent::Sent, from, to, kind: kind.into(), bytes, seq };
        if self.offline.contains(&from) {
            entry.event = TraceEvent::Dropped;
            self.trace.push(entry);
            return false;
        }
        self.trace.push(entry);
        let delay = self.latency.sample(&mut self.rng)
            + self.extra_delay.get(&from).copied().unwrap_or(0)
            + self.extra_delay.get(&to).copied().unwrap_or(0);
        let channel = self.last_delivery.entry((from, to)).or_insert(0);
        let deliver_at = (self.now + delay).max(*channel);
        *channel = deliver_at;
        self.queue.push(Pending(Envelope {
            from,
            to,
            sent_at: self.now,
            deliver_at,
            seq,
            kind: kind.into(),
            bytes,
            msg,
        }));
        true
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.queue.peek().map(|p| p.0.deliver_at)
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Delivers the next message due at or before `deadline`, advancing the
    /// clock. Messages for offline recipients are dropped and skipped.
    pub fn next_before(&mut self, deadline: SimTime) -> Option<Envelope<M>> {
        while self.peek_time().is_some_and(|t| t <= deadline) {
            let Pending(env) = self.queue.pop().expect("peeked");
            self.now = self.now.max(env.deliver_at);
            let dropped = self.offline.contains(&env.to);
            self.trace.push(TraceEntry {
                time: self.now,
                event: if dropped { TraceEvent::Dropped } else { TraceEvent::Delivered },
                from: env.from,
                to: env.to,
                kind: env.kind.clone(),
                bytes: env.bytes,
                seq: env.seq,
            });
            if !dropped {
                return Some(env);
            }
        }
        None
    }

    pub fn next(&mut self) -> Option<Envelope<M>> {
        self.next_before(SimTime::MAX)
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    pub fn take_trace(&mut self) -> Vec<TraceEntry> {
        std::mem::take(&mut self.trace)
    }
}

/// Scripted input for [`simulate_network`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NetEvent {
    Send { at: SimTime, from: NodeId, to: NodeId, kind: String, bytes: usize },
    SetOnline { at: SimTime, node: NodeId, online: bool },
    Delay { at: SimTime, node: NodeId, extra: SimTime },
}

impl NetEvent {
    fn at(&self) -> SimTime {
        match self {
            NetEvent::Send { at, .. } | NetEvent::SetOnline { at, .. } | NetEvent::Delay { at, .. } => *at,
        }
    }
}

/// Replays `events` in time order (stable for equal times) and returns the
/// resulting delivery trace.
pub fn simulate_network(events: &[NetEvent], latency: LatencyModel, seed: u64) -> Vec<TraceEntry> {
    let mut net: SimNetwork<()> = SimNetwork::new(latency, seed);
    let mut order: Vec<&NetEvent> = events.iter().collect();
    order.sort_by_key(|e| e.at());
    for ev in order {
        while net.next_before(ev.at()).is_some() {}
        net.advance_to(ev.at());
        match ev {
            NetEvent::Send { from, to, kind, bytes, .. } => {
                net.send(*from, *to, kind, *bytes, ());
            }
            NetEvent::SetOnline { node, online, .. } => net.set_online(*node, *online),
            NetEvent::Delay { node, extra, .. } => net.set_extra_delay(*node, *extra),
        }
    }
    while net.next().is_some() {}
    net.take_trace()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn send(at: SimTime, from: NodeId, to: NodeId, kind: &str) -> NetEvent {
        NetEvent::Send { at, from, to, kind: kind.into(), bytes: 10 }
    }

    fn delivered(trace: &[TraceEntry]) -> Vec<&str> {
        trace.iter().filter(|e| e.event == TraceEvent::Delivered).map(|e| e.kind.as_str()).collect()
    }

    #[test]
    fn in_order_without_faults() {
        let a = NodeId::Aggregator;
        let p = NodeId::Participant(0);
        let events: Vec<_> = (0..50).map(|i| send(i, a, p, &format!("m{i}"))).collect();
        let trace = simulate_network(&events, LatencyModel { base: 5, jitter: 100 }, 1);
        let expect: Vec<String> = (0..50).map(|i| format!("m{i}")).collect();
        assert_eq!(delivered(&trace), expect.iter().map(String::as_str).collect::<Vec<_>>());
    }

    #[test]
    fn offline_recipient_gets_nothing() {
        let a = NodeId::Aggregator;
        let p3 = NodeId::Participant(3);
        let events = vec![
            send(0, a, p3, "epoch1"),
            NetEvent::SetOnline { at: 1000, node: p3, online: false },
            send(1000, a, p3, "epoch2"),
            send(1001, p3, a, "epoch2-response"),
            NetEvent::SetOnline { at: 2000, node: p3, online: true },
            send(2000, a, p3, "epoch3"),
        ];
        let trace = simulate_network(&events, LatencyModel::default(), 4);
        assert_eq!(delivered(&trace), vec!["epoch1", "epoch3"]);
        assert_eq!(trace.iter().filter(|e| e.event == TraceEvent::Dropped).count(), 2);
    }

    #[test]
    fn delay_pushes_delivery_back() {
        let a = NodeId::Aggregator;
        let p = NodeId::Participant(1);
        let events = vec![NetEvent::Delay { at: 0, node: p, extra: 5000 }, send(0, p, a, "late")];
        let trace = simulate_network(&events, LatencyModel { base: 10, jitter: 0 }, 0);
        let d = trace.iter().find(|e| e.event == TraceEvent::Delivered).unwrap();
        assert_eq!(d.time, 5010);
    }

    #[test]
    fn same_seed_same_trace() {
        let events: Vec<_> = (0..30)
            .map(|i| send(i * 3, NodeId::Participant(i as usize % 4), NodeId::Aggregator, "r"))
            .collect();
        let render = |seed| {
            simulate_network(&events, LatencyModel::default(), seed)
                .iter()
                .map(|e| e.to_string() + "\n")
                .collect::<String>()
        };
        assert_eq!(render(9), render(9));
        assert_ne!(render(9), render(10));
    }
}
