//! Decentralized finite-sum optimization over simulated agent networks.
//!
//! The crate covers graph and mixing-matrix construction ([`topology`]),
//! synthetic and file-backed objectives ([`objective`]), per-agent
//! reshuffling ([`shuffling`]), the optimizers themselves ([`algorithms`]),
//! the polynomial A/B/C operator family and its spectral transform
//! ([`abc`]), stepsize schedules and theory constants ([`stepsize`]),
//! per-epoch metrics ([`metrics`]) and experiment orchestration
//! ([`harness`]).

pub mod abc;
pub mod algorithms;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod objective;
pub mod shuffling;
pub mod stepsize;
pub mod topology;

pub use error::{Error, Result};
