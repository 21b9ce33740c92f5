//! Benchmark environments with their stage potentials.

mod dag;
mod distancing;
mod random;
mod scg;
mod stage;

pub use dag::{parse_dag_spec, CostDescriptor, DagEdge, DagSpec};
pub use distancing::{build_distancing, DistancingParams, SAFE, SPREAD};
pub use random::random_mdp;
pub use scg::{build_scg, build_scg_with, Scg, ScgOptions, SinkMode, Start, StateSpace};
pub use stage::{build_stage_congestion, pure_nash_profiles};
