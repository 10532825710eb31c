//! Shared fixtures for the criterion benches.

use prmlab_core::datagen::{generate, GenConfig};
use prmlab_core::model::{FeaturizerConfig, ScorerParameters};
use prmlab_core::Trajectory;

pub fn dataset(num_traces: usize) -> Vec<Trajectory> {
    generate(&GenConfig {
        num_traces,
        ..GenConfig::default()
    })
    .expect("default config is valid")
}

pub fn scorer(hidden_dim: usize) -> ScorerParameters {
    ScorerParameters::init(FeaturizerConfig::default(), hidden_dim, 1)
        .expect("default featurizer is valid")
}
