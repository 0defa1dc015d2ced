//! Experiment driver: configuration, continuation sweeps, self-checks and
//! operation counts.

pub mod bench;
pub mod config;
pub mod sweep;
pub mod verify;

pub use bench::{run_bench, BenchRow};
pub use config::{ExperimentConfig, Profile};
pub use sweep::{loop_area, run_sweep, LoopArea, SweepBranch, SweepRecord};
pub use verify::{run_suite, Suite, SuiteReport};
