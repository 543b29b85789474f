//! Sweep configuration, execution and result emission.

pub mod config;
pub mod output;
pub mod report;
pub mod sweep;

pub use config::{load_config, Engines, Mode, Scenario, SweepSpec, SweepVariable};
pub use output::{emit_results, Format};
pub use report::{agreement_report, AgreementReport};
pub use sweep::{run_sweep, Engine, Quality, ResultRow};
