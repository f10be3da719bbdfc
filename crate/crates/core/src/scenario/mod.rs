//! Scenario documents, the shipped scenario library and the run pipeline.

pub mod config;
pub mod library;
pub mod runner;

pub use config::{parse_config, ScenarioConfig, SuiteName};
pub use library::{find_shipped, list_scenarios, load_scenario, ShippedScenario, SHIPPED};
pub use runner::{report, run_id, run_scenario, with_overrides, Manifest, RunArtifact, RunStatus};
