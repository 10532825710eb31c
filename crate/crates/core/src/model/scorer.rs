use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::AdamState;
use super::featurize::{featurize_step, FeaturizerConfig, SparseFeatures};
use crate::error::{Error, Result};
use crate::objective::realized_logit_grad;
use crate::types::{simplex_from_logits, Label, StepContent, StepProbabilities};

/// Offsets of each parameter block inside the flat parameter vector, in
/// checkpoint order: `weights_in` (H x D, row-major), `bias_in` (H),
/// `weights_out` (3 x K, row-major, K = H or D when H = 0), `bias_out` (3).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub dim: usize,
    pub hidden_dim: usize,
}

impl ParamLayout {
    pub fn out_fan_in(&self) -> usize {
        if self.hidden_dim == 0 {
            self.dim
        } else {
            self.hidden_dim
        }
    }

    pub fn weights_in(&self) -> Range<usize> {
        0..self.hidden_dim * self.dim
    }

    pub fn bias_in(&self) -> Range<usize> {
        let s = self.weights_in().end;
        s..s + self.hidden_dim
    }

    pub fn weights_out(&self) -> Range<usize> {
        let s = self.bias_in().end;
        s..s + 3 * self.out_fan_in()
    }

    pub fn bias_out(&self) -> Range<usize> {
        let s = self.weights_out().end;
        s..s + 3
    }

    pub fn len(&self) -> usize {
        self.bias_out().end
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Weights of the step scorer plus its optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerParameters {
    pub featurizer: FeaturizerConfig,
    pub hidden_dim: usize,
    /// All parameters, laid out per [`ParamLayout`].
    pub values: Vec<f64>,
    pub optimizer: AdamState,
    pub step_count: u64,
}

impl ScorerParameters {
    /// All-zero parameters; every input scores `(1/3, 1/3, 1/3)`.
    pub fn zeros(featurizer: FeaturizerConfig, hidden_dim: usize) -> Result<Self> {
        featurizer.validate()?;
        let len = ParamLayout {
            dim: featurizer.dim,
            hidden_dim,
        }
        .len();
        Ok(ScorerParameters {
            featurizer,
            hidden_dim,
            values: vec![0.0; len],
            optimizer: AdamState::zeros(len),
            step_count: 0,
        })
    }

    /// Uniform random initialization: input weights in `±1`, output weights
    /// in `±1/sqrt(K)`, biases zero.
    pub fn init(featurizer: FeaturizerConfig, hidden_dim: usize, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(featurizer, hidden_dim)?;
        let layout = params.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in &mut params.values[layout.weights_in()] {
            *v = rng.gen_range(-1.0..1.0);
        }
        let scale = if hidden_dim == 0 {
            0.1
        } else {
            1.0 / (layout.out_fan_in() as f64).sqrt()
        };
        for v in &mut params.values[layout.weights_out()] {
            *v = rng.gen_range(-scale..scale);
        }
        Ok(params)
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout {
            dim: self.featurizer.dim,
            hidden_dim: self.hidden_dim,
        }
    }

    pub fn weights_in(&self) -> &[f64] {
        &self.values[self.layout().weights_in()]
    }

    pub fn bias_in(&self) -> &[f64] {
        &self.values[self.layout().bias_in()]
    }

    pub fn weights_out(&self) -> &[f64] {
        &self.values[self.layout().weights_out()]
    }

    pub fn bias_out(&self) -> &[f64] {
        &self.values[self.layout().bias_out()]
    }

    pub fn validate(&self) -> Result<()> {
        self.featurizer.validate()?;
        let len = self.layout().len();
        if self.values.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                found: self.values.len(),
            });
        }
        if self.optimizer.first_moment.len() != len || self.optimizer.second_moment.len() != len {
            return Err(Error::InvalidInput(
                "optimizer state shape differs from parameters".into(),
            ));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite parameter".into()));
        }
        Ok(())
    }
}

/// Activations kept from the forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub logits: [f64; 3],
    pub probs: StepProbabilities,
    /// Hidden pre-activations (empty for the linear model).
    pub hidden_pre: Vec<f64>,
    /// Rectified hidden activations (empty for the linear model).
    pub hidden: Vec<f64>,
}

/// Scores one feature vector.
pub fn forward(features: &SparseFeatures, params: &ScorerParameters) -> Result<Forward> {
    let layout = params.layout();
    if features.dim != layout.dim {
        return Err(Error::DimensionMismatch {
            expected: layout.dim,
            found: features.dim,
        });
    }
    let w_out = params.weights_out();
    let b_out = params.bias_out();
    let k = layout.out_fan_in();
    let mut logits = [b_out[0], b_out[1], b_out[2]];
    let (hidden_pre, hidden) = if layout.hidden_dim == 0 {
        for (i, x) in features.iter() {
            for (c, z) in logits.iter_mut().enumerate() {
                *z += w_out[c * k + i] * x;
            }
        }
        (Vec::new(), Vec::new())
    } else {
        let d = layout.dim;
        let w_in = params.weights_in();
        let pre: Vec<f64> = params
            .bias_in()
            .iter()
            .enumerate()
            .map(|(j, b)| {
                let row = &w_in[j * d..(j + 1) * d];
                b + features.iter().map(|(i, x)| row[i] * x).sum::<f64>()
            })
            .collect();
        let act: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
        for (c, z) in logits.iter_mut().enumerate() {
            let row = &w_out[c * k..(c + 1) * k];
            *z += row.iter().zip(&act).map(|(w, h)| w * h).sum::<f64>();
        }
        (pre, act)
    };
    Ok(Forward {
        probs: simplex_from_logits(logits)?,
        logits,
        hidden_pre,
        hidden,
    })
}

/// Accumulates the parameter gradient implied by `dz = dL/dlogits` into
/// `grad`, scaled by `scale`.
pub fn backward(
    features: &SparseFeatures,
    fwd: &Forward,
    dz: [f64; 3],
    scale: f64,
    params: &ScorerParameters,
    grad: &mut [f64],
) {
    let layout = params.layout();
    let dz = dz.map(|g| g * scale);
    let k = layout.out_fan_in();
    let wo = layout.weights_out().start;
    let bo = layout.bias_out().start;
    for c in 0..3 {
        grad[bo + c] += dz[c];
    }
    if layout.hidden_dim == 0 {
        for (i, x) in features.iter() {
            for c in 0..3 {
                grad[wo + c * k + i] += dz[c] * x;
            }
        }
        return;
    }
    let w_out = params.weights_out();
    let d = layout.dim;
    let bi = layout.bias_in().start;
    for j in 0..layout.hidden_dim {
        let h = fwd.hidden[j];
        for c in 0..3 {
            grad[wo + c * k + j] += dz[c] * h;
        }
        if fwd.hidden_pre[j] <= 0.0 {
            continue;
        }
        let dpre: f64 = (0..3).map(|c| dz[c] * w_out[c * k + j]).sum();
        grad[bi + j] += dpre;
        let row = j * d;
        for (i, x) in features.iter() {
            grad[row + i] += dpre * x;
        }
    }
}

/// Backward pass of the realized step loss with the buffer factor fixed.
#[allow(clippy::too_many_arguments)]
pub fn backward_step(
    features: &SparseFeatures,
    fwd: &Forward,
    label: Label,
    beta: bool,
    alpha: f64,
    scale: f64,
    params: &ScorerParameters,
    grad: &mut [f64],
) {
    let dz = realized_logit_grad(&fwd.probs, label, beta, alpha);
    backward(features, fwd, dz, scale, params, grad);
}

/// Anything that assigns right/wrong/buffer probabilities to a trajectory's
/// steps.
pub trait StepScorer: Sync {
    fn score_steps(&self, steps: &[StepContent]) -> Vec<StepProbabilities>;
}

impl StepScorer for ScorerParameters {
    fn score_steps(&self, steps: &[StepContent]) -> Vec<StepProbabilities> {
        let total = steps.len();
        steps
            .iter()
            .map(|s| {
                let f = featurize_step(s, total, &self.featurizer);
                forward(&f, self)
                    .expect("featurizer and parameters share a dimension")
                    .probs
            })
            .collect()
    }
}
