use thiserror::Error;

use crate::protocol::RunReport;
use crate::tpa::RejectReason;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("group setup failed: {0}")]
    Setup(String),

    #[error("invalid group parameters: {0}")]
    InvalidGroup(String),

    #[error("dlog table of {requested} entries exceeds the cap of {cap}")]
    Capacity { requested: u64, cap: u64 },

    #[error("discrete log not found within [-{bound}, {bound}]; aggregation bound is misconfigured")]
    DlogOutOfRange { bound: u64 },

    #[error("no free key slot: all {capacity} slots are assigned")]
    NoSlot { capacity: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("encoding error: {0}")]
    Encoding(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("function key request rejected: {0}")]
    Rejected(RejectReason),

    #[error("model architecture mismatch: {0}")]
    Architecture(String),

    #[error("malformed wire data: {0}")]
    Wire(String),

    #[error("training failed: quorum was not reached in any epoch")]
    TrainingFailed(Box<RunReport>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
