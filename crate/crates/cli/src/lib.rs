//! Manifest-driven batch runs of the panelflow stages.

pub mod manifest;
pub mod stages;

pub use manifest::{LoadedManifest, Manifest};
pub use stages::{synth, Run, Stage, StageOutcome};
