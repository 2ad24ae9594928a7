//! Schedulability analysis and simulation for sporadic DAG tasks on
//! identical multiprocessors.
//!
//! * [`task_model`]: tasks, task sets, platforms, work and span.
//! * [`generator`]: the federated-scheduling counterexample family and
//!   random DAG task sets.
//! * [`feasibility`]: demand bound functions and partitioned EDF tests.
//! * [`federated`]: heavy/light classification, exclusive-processor demand
//!   bounds and a federated allocator.
//! * [`simulator`]: exact-time partitioned EDF and list scheduling.
//! * [`explorer`]: speedup-factor search, sweeps and a brute-force oracle.
//!
//! All quantities are exact rationals ([`ExactTime`]).

pub mod explorer;
pub mod feasibility;
pub mod federated;
pub mod generator;
pub mod simulator;
pub mod task_model;
pub mod time;

pub use task_model::{DagTask, Platform, Subtask, TaskSet, ValidationReport};
pub use time::{ExactTime, Period};
