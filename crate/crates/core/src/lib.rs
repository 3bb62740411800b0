//! Topology engineering for data-center cores built on optical circuit switches.
//!
//! The pipeline: cluster a window of traffic matrices, compute a throughput
//! optimal fractional topology per representative, combine them, round the
//! result onto the OCS planes, then evaluate routing over the integer topology.

pub mod circulation;
pub mod error;
pub mod fabric;
pub mod fractopo;
pub mod ocsmap;
pub mod paths;
pub mod routing;
pub mod solver;
pub mod topology;
pub mod traffic;

pub use error::{Error, Result};
pub use fabric::{FabricFile, PhysicalTopology, PodSpec};
pub use paths::{build_path_set, Path, PathSet};
pub use topology::{uniform_mesh, validate_logical, FractionalTopology, LogicalTopology};
pub use traffic::{TrafficMatrix, TrafficTrace};
