//! Synthetic reasoning traces with planted first errors.
//!
//! Steps are bags of tokens drawn from two disjoint vocabularies. Steps
//! before the planted error use the "correct" vocabulary only; the error step
//! and everything after it draw `round((1 - vocab_overlap) * tokens_per_step)`
//! tokens from the "error" vocabulary and the rest from the correct one. The
//! true outcome is 0 exactly when an error was planted; the emitted outcome
//! flips it with probability `outcome_flip_rate`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::mix64;
use crate::types::Trajectory;

/// Size of each base vocabulary.
pub const VOCAB_SIZE: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub num_traces: usize,
    pub steps_min: usize,
    pub steps_max: usize,
    pub error_rate: f64,
    pub outcome_flip_rate: f64,
    pub vocab_overlap: f64,
    pub tokens_per_step: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            num_traces: 1000,
            steps_min: 3,
            steps_max: 10,
            error_rate: 0.5,
            outcome_flip_rate: 0.1,
            vocab_overlap: 0.3,
            tokens_per_step: 12,
            seed: 7,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_traces == 0 {
            return Err(Error::InvalidInput("num_traces must be positive".into()));
        }
        if self.steps_min < 1 || self.steps_min > self.steps_max {
            return Err(Error::InvalidInput(format!(
                "need 1 <= steps_min <= steps_max, got {} and {}",
                self.steps_min, self.steps_max
            )));
        }
        for (name, v) in [
            ("error_rate", self.error_rate),
            ("outcome_flip_rate", self.outcome_flip_rate),
            ("vocab_overlap", self.vocab_overlap),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Error-vocabulary tokens in a step at or after the planted error.
    pub fn error_tokens_per_step(&self) -> usize {
        ((1.0 - self.vocab_overlap) * self.tokens_per_step as f64).round() as usize
    }
}

pub fn correct_token(i: usize) -> String {
    format!("c{i:03}")
}

pub fn error_token(i: usize) -> String {
    format!("e{i:03}")
}

pub fn is_error_token(token: &str) -> bool {
    token.starts_with('e')
}

fn trace_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(index as u64)))
}

fn generate_one(config: &GenConfig, index: usize) -> Trajectory {
    let mut rng = trace_rng(config.seed, index);
    let total = rng.gen_range(config.steps_min..=config.steps_max);
    let planted = rng.gen_bool(config.error_rate);
    let first_error = planted.then(|| rng.gen_range(1..=total));
    let n_err = config.error_tokens_per_step().min(config.tokens_per_step);

    let steps = (1..=total)
        .map(|pos| {
            let erroneous = first_error.is_some_and(|e| pos >= e);
            let n_bad = if erroneous { n_err } else { 0 };
            let mut tokens: Vec<String> = (0..config.tokens_per_step)
                .map(|k| {
                    if k < n_bad {
                        error_token(rng.gen_range(0..VOCAB_SIZE))
                    } else {
                        correct_token(rng.gen_range(0..VOCAB_SIZE))
                    }
                })
                .collect();
            tokens.shuffle(&mut rng);
            tokens
        })
        .collect();

    let true_outcome = u8::from(!planted);
    let outcome = if rng.gen_bool(config.outcome_flip_rate) {
        1 - true_outcome
    } else {
        true_outcome
    };
    Trajectory::from_token_steps(format!("syn-{index:06}"), steps, outcome, first_error)
        .expect("generator emits valid trajectories")
}

/// Generates `config.num_traces` trajectories. Trace `i` depends only on
/// `(seed, i)`.
pub fn generate(config: &GenConfig) -> Result<Vec<Trajectory>> {
    config.validate()?;
    Ok((0..config.num_traces)
        .into_par_iter()
        .map(|i| generate_one(config, i))
        .collect())
}
