//! Library side of the `firemu` command: dataset manifests and the pipeline
//! commands (generate, simulate, train, predict, evaluate, ensemble, bench).

pub mod commands;
pub mod manifest;

pub use commands::*;
pub use manifest::{RunManifest, SampleEntry, Split, MANIFEST_FILE, SIM_CONFIG_FILE};
