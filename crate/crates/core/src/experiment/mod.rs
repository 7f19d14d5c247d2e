//! Experiment drivers behind the `netsac` binary.

pub mod config;
pub mod decay;
pub mod evaluate;
pub mod output;
pub mod sweep;
pub mod validate;
pub mod wireless;

pub use config::{EnvSpec, EvalMethod, ExperimentConfig};
pub use decay::{decay_report, write_decay_report, DecayOutcome};
pub use evaluate::{eval_horizon, evaluate, evaluate_policy, Estimate};
pub use output::{analyze, read_rows, ResultRow, SweepAnalysis};
pub use sweep::{run_cell, run_kappa_sweep, CellResult, SweepOutcome};
pub use validate::validate_config;
pub use wireless::{run_wireless_benchmark, ComparisonRow, WirelessOutcome};
