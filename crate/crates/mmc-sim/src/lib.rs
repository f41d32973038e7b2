//! Scenario files, batch runs and output formats for `mmc-core`.

pub mod freqresp;
pub mod output;
pub mod presets;
pub mod runner;
pub mod scenario;

pub use runner::{run_scenario, Report, RunError, RunOutput};
pub use scenario::{parse_scenario, parse_scenario_with, preset_scenario, Overrides, Scenario, ScenarioError};
