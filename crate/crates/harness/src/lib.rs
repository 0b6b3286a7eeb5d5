//! Experiment harness: scenario files, seeded runs and sweeps, paired regret
//! studies, CSV/JSON artifacts, and SVG plots.

// `!(a > b)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod output;
pub mod plot;
pub mod runner;
pub mod scenario;

use std::path::Path;

pub use config::{parse_config, ScenarioConfig};
pub use error::HarnessError;

/// Reads and resolves a scenario file.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_config(&text).map_err(|e| match e {
        HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}
