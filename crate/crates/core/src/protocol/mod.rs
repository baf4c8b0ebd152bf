//! The training protocol over a simulated network: one aggregator, one key
//! authority and any number of participants.

mod metrics;
mod network;
mod scenario;
mod sim;

pub use metrics::{crypto_message_total, EpochMetrics, EpochStatus, EpochTimings, RunReport};
pub use network::{
    simulate_network, ticks_to_units, units_to_ticks, Envelope, LatencyModel, NetEvent, NodeId, SimNetwork, SimTime,
    TraceEntry, TraceEvent, TICKS_PER_UNIT,
};
pub use scenario::{DataSection, DpSection, ModelKind, ModelSection, NetworkSection, Scenario};
pub use sim::{
    run_training, Baseline, DelayRule, DropoutRule, JoinRule, Participant, Payload, QueryMessage, ResponseMessage,
    Schedule, TrainingConfig, TrainingInputs, DEFAULT_SIM_TABLE_BOUND,
};
