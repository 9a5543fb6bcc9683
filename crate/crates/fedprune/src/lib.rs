//! Deterministic simulator for federated learning with progressive client
//! pruning.
//!
//! Each round, every active client trains locally and reports a contribution
//! score (parameter displacement times a data-quality term). The server
//! denoises the score vector under a Gaussian scale mixture prior and prunes
//! clients whose denoised score collapses to zero, subject to a warm-up
//! period, a per-round cap, and a participation floor. A communication
//! ledger tracks the resulting upload savings.
//!
//! Everything is seeded: given the same config, two runs produce
//! byte-identical metrics files regardless of thread count.

use std::fmt;

pub mod config;
pub mod contribution;
pub mod data;
pub mod error;
pub mod federation;
pub mod gsm;
pub mod harness;
pub mod models;
pub mod oracle;
pub mod pruning;
pub mod seeding;

pub use error::{Error, Result};

/// Identifier of a federated client, stable for the lifetime of an
/// experiment. Pruned clients keep their id; ids are never reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClientId(pub usize);

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
