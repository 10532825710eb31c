//! Weakly supervised step-level reward modelling.
//!
//! Trajectories carry only an outcome label. Every step inherits that label,
//! and a three-way right/wrong/buffer head lets the scorer park ambiguous
//! steps in the buffer instead of fitting label noise. The crate holds the
//! objective with its closed-form gradients, a hashing featurizer with a
//! small scorer trained by hand-written backpropagation, a synthetic data
//! generator with planted first errors, dataset I/O, first-error and
//! best-of-N evaluation, and numerical checks of the gradient identities.

pub mod datagen;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod model;
pub mod objective;
pub mod pseudolabel;
pub mod theory;
pub mod types;

pub use error::{Error, Result};
pub use objective::{LossConfig, LossMode};
pub use types::{
    simplex_from_logits, validate_trajectory, Label, StepContent, StepProbabilities, Trajectory,
    EPS_PROB,
};
