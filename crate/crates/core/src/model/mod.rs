//! Per-step featurizer and a small scorer with a three-way head.

mod adam;
mod checkpoint;
mod featurize;
mod scorer;
mod train;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{
    load_checkpoint, load_checkpoint_for, save_checkpoint, CHECKPOINT_FORMAT_VERSION,
};
pub(crate) use featurize::mix64;
pub use featurize::{featurize_step, FeaturizerConfig, SparseFeatures};
pub use scorer::{
    backward, backward_step, forward, Forward, ParamLayout, ScorerParameters, StepScorer,
};
pub use train::{train, EpochStats, TrainConfig, TrainOutcome};
