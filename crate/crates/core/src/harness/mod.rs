//! Monte Carlo experiment engine and figure runners.

pub mod engine;
pub mod experiments;
pub mod output;
pub mod stats;

pub use experiments::{run_experiment, ExperimentId, ExperimentOutput, ExperimentSpec};
pub use stats::{Curve, Sample, StatSummary};
