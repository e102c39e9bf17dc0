//! Synthetic rotating-panel microdata with known ground truth.

pub mod corrupt;
pub mod generate;
pub mod logit_sample;
pub mod rng;
pub mod truth;

pub use corrupt::{corrupt, CorruptionSpec, Injection, InjectionKind};
pub use generate::{
    default_kernel, generate, FsuTruth, GroundTruth, PathStep, PermutationMode, SynthConfig,
    SynthOutput,
};
pub use logit_sample::{default_logit_truth, generate_logit_sample, LogitSample};
pub use truth::write_ground_truth;
