//! Command-line harness: configuration, presets, experiment dispatch and
//! output files.

pub mod config;
pub mod output;
mod plots;
pub mod presets;
pub mod run;

pub use config::{Experiment, ExperimentConfig};
pub use output::{RunManifest, MANIFEST};
pub use presets::{find as find_preset, Preset, PRESETS};
pub use run::run;

/// Names and descriptions of the frozen presets.
pub fn list_presets() -> Vec<(&'static str, &'static str)> {
    PRESETS.iter().map(|p| (p.name, p.description)).collect()
}
