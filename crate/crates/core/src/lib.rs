//! Finite-horizon throughput maximization for a wirelessly powered device.
//!
//! An access point charges the device over a fading channel for the first
//! `T_0 - 1` slots of a frame; the device then transmits until slot `T`.
//! This crate provides the closed-form controller (threshold stopping of
//! the harvesting phase and optimal per-slot power split), a brute-force
//! dynamic-programming oracle for it, and a Monte Carlo experiment engine.

pub mod channel;
pub mod error;
pub mod experiment;
pub mod oracle;
pub mod policy;
pub mod sim;

pub use channel::{ContinuousFadingLaw, DiscreteChannel};
pub use error::{Error, Result};
pub use oracle::{GridSpec, ItValueTable, OracleReport, StoppingTable};
pub use policy::{PolicyTables, SystemParams};
pub use sim::{EpisodeTrace, MonteCarloSummary, PolicySpec, Simulator};
