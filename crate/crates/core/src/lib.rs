//! Performance models of combined channel aggregation and fragmentation
//! (CAF) spectrum sharing in a cognitive radio cell.
//!
//! [`model`] holds the shared parameters and per-state rates, [`ctmc`]
//! solves the continuous-time Markov chain exactly, [`des`] simulates the
//! same admission/sharing procedures event by event, and [`harness`] runs
//! parameter sweeps over both and compares them.

pub mod ctmc;
pub mod des;
pub mod exec;
pub mod harness;
pub mod model;
pub mod validation;

pub use ctmc::{analyze, Metrics};
pub use des::{simulate, SimConfig};
pub use exec::Execution;
pub use model::{StateSpace, SystemParams, SystemState};
