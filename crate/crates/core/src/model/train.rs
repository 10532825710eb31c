use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::AdamConfig;
use super::featurize::{featurize_step, SparseFeatures};
use super::scorer::{backward, forward, Forward, ScorerParameters};
use crate::error::{Error, Result};
use crate::objective::{
    expected_logit_grad, expected_trajectory_loss, realized_logit_grad, sample_buffer_factors,
    trajectory_loss, BufferFactors, LossConfig, LossMode,
};
use crate::pseudolabel::assign_pseudo_labels;
use crate::types::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Trajectories per optimizer step.
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: LossConfig,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 16,
            epochs: 1,
            loss: LossConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidInput(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch_size must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidInput("epochs must be positive".into()));
        }
        self.loss.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean trajectory loss over the epoch, measured before each batch update.
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ScorerParameters,
    pub trace: Vec<EpochStats>,
}

/// Trains the scorer on outcome labels only.
///
/// Each trajectory's steps inherit its outcome as pseudo labels. Gradients
/// are averaged over the trajectories of a batch and applied with one Adam
/// step. The run is a pure function of `(dataset, params, config)`.
pub fn train(
    dataset: &[Trajectory],
    mut params: ScorerParameters,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    config.validate()?;
    params.validate()?;

    let features: Vec<Vec<SparseFeatures>> = dataset
        .par_iter()
        .map(|t| {
            let total = t.steps.len();
            t.steps
                .iter()
                .map(|s| featurize_step(s, total, &params.featurizer))
                .collect()
        })
        .collect();

    let adam = AdamConfig::with_learning_rate(config.learning_rate);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut beta_rng = ChaCha8Rng::seed_from_u64(config.loss.rng_seed);
    let mut grad = vec![0.0; params.values.len()];
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &idx in batch {
                let view = dataset[idx].weak_view();
                let labels = assign_pseudo_labels(view);
                let feats = &features[idx];
                let total = feats.len();
                let fwds: Vec<Forward> = feats
                    .iter()
                    .map(|f| forward(f, &params))
                    .collect::<Result<_>>()?;
                let probs: Vec<_> = fwds.iter().map(|f| f.probs).collect();

                let betas = match config.loss.mode {
                    LossMode::Stochastic => {
                        sample_buffer_factors(&probs, &config.loss, &mut beta_rng)
                    }
                    LossMode::Expected => BufferFactors {
                        beta: vec![false; total],
                    },
                };
                let loss = match config.loss.mode {
                    LossMode::Stochastic => trajectory_loss(&probs, &labels, &betas, &config.loss)?,
                    LossMode::Expected => expected_trajectory_loss(&probs, &labels, &config.loss)?,
                };
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        id: view.id.to_string(),
                    });
                }
                epoch_loss += loss;

                let scale = 1.0 / (total as f64 * batch.len() as f64);
                for (t, (f, fwd)) in feats.iter().zip(&fwds).enumerate() {
                    let label = labels.labels[t];
                    let alpha = config.loss.step_weight(t + 1, total);
                    let buffered = config.loss.buffer_enabled && t + 1 < total;
                    let dz = match config.loss.mode {
                        LossMode::Expected if buffered => {
                            expected_logit_grad(&fwd.probs, label, alpha)
                        }
                        _ => realized_logit_grad(&fwd.probs, label, betas.beta[t], alpha),
                    };
                    backward(f, fwd, dz, scale, &params, &mut grad);
                }
            }
            params.step_count += 1;
            let step = params.step_count;
            let ScorerParameters {
                values, optimizer, ..
            } = &mut params;
            optimizer.update(values, &grad, step, &adam);
        }
        trace.push(EpochStats {
            epoch,
            mean_loss: epoch_loss / dataset.len() as f64,
        });
    }
    Ok(TrainOutcome { params, trace })
}
