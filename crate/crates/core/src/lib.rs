//! Uplink large-intelligent-surface (LIS) simulation and analysis.
//!
//! The crate synthesizes LOS and correlated Rician channels for multi-LIS
//! deployments, runs least-squares estimation under pilot reuse, evaluates
//! matched-filter SINR and system spectral efficiency, computes the large-array
//! deterministic equivalents, and optimizes the pilot length and number of
//! scheduled devices.

pub mod asymptotics;
pub mod channel;
pub mod config;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod linalg;
pub mod optimize;
pub mod rng;
pub mod scenario;
pub mod sinr;

pub use error::{LisError, Result};
