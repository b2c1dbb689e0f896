//! Scenario runner and benchmarking harness: builds the primitive benchmark
//! scenes, drives the per-step pipeline (collide → assemble → build dual →
//! solve → integrate), captures dual-problem datasets, and writes CSV time
//! series, metrics and performance profiles.

pub mod capture;
pub mod error;
pub mod metrics_io;
pub mod runner;
pub mod scenario;
pub mod scene;

pub use error::CliError;
pub use runner::{run_simulation, RunArtifacts, RunConfig, RunStatus, StepRecord};
pub use scenario::{build_scenario, Overrides, Scenario, ScenarioId};
