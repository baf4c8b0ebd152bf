//! Secure aggregation for federated learning built on multi-input functional
//! encryption for inner products.
//!
//! A trusted authority hands every participant its own public key. Each
//! participant encrypts its (optionally noised) model once per round, and the
//! aggregator decrypts only the average, using a function key the authority
//! issues after checking that the requested weights cannot isolate anyone.
//!
//! ```no_run
//! use hybridalpha::protocol::Scenario;
//!
//! let scenario = Scenario::load("scenario.toml")?;
//! let report = scenario.run()?;
//! println!("final F1: {:?}", report.last_f1());
//! # Ok::<(), hybridalpha::Error>(())
//! ```

pub mod bench;
pub mod dp;
mod error;
pub mod fixedpoint;
pub mod group;
pub mod learning;
pub mod mife;
pub mod protocol;
pub mod tpa;
mod wire;

pub use error::{Error, Result};
