//! Experiment harness: configuration, trace replay, sweeps, reports and the
//! rounding benchmark.

pub mod bench;
pub mod config;
pub mod error;
pub mod experiment;
pub mod report;

pub use config::{ExperimentConfig, Predictor, RoutingScheme, Scheme, TopologyScheme};
pub use error::{HarnessError, Result};
pub use experiment::{build_topology, run_epochal, sweep_reconfig_frequency, BuildOptions, Fabric, RunReport};
pub use report::emit_report;
