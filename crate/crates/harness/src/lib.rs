//! Scenario runner for `gridtrack`: JSON configuration, synthetic experiments,
//! metrics, file formats and the randomized enumeration cross-check.

pub mod config;
pub mod error;
pub mod experiment;
pub mod io;
pub mod oracle;

pub use config::ScenarioConfig;
pub use error::{HarnessError, Result};
pub use experiment::{l_sweep, prior_baseline, Experiment, RunMetrics, RunOutput};
