//! Experiment runner for mean-field O(N) spin models: run manifests,
//! parallel chains, limit-law checks, exchangeable-pair diagnostics and
//! thermodynamic tables.

pub mod checks;
pub mod manifest;
pub mod run;
pub mod tables;

pub use checks::{limit_check, stein_diagnostics, Check, LimitCheckReport, SteinReport};
pub use manifest::{RunOptions, RunManifest, UsageError};
pub use run::{run_sample, SampleRun};
