//! The buffered step-reward objective.
//!
//! Per step, with target probability `p_target` (right for label 1, wrong for
//! label 0), buffer probability `p_buffer` and a realized buffer factor
//! `beta ∈ {0, 1}`:
//!
//! ```text
//! loss_t = -alpha_t * log(p_target + beta * p_buffer)
//! ```
//!
//! A trajectory loss is the mean over its steps. `beta` is drawn from
//! `Bernoulli(p_buffer)` except on the last step, where it is always 0 and
//! `alpha_T` takes the configured last-step weight. Expected mode replaces
//! the draw with its closed-form expectation over `beta`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pseudolabel::PseudoLabels;
use crate::types::{Label, StepProbabilities, EPS_PROB};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    /// Draw each buffer factor and treat it as a constant in the backward pass.
    Stochastic,
    /// Optimize the expectation over buffer factors in closed form.
    Expected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the final step; every other step has weight 1.
    pub last_step_weight: f64,
    pub buffer_enabled: bool,
    pub mode: LossMode,
    pub eps_prob: f64,
    pub rng_seed: u64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            last_step_weight: 3.0,
            buffer_enabled: true,
            mode: LossMode::Stochastic,
            eps_prob: EPS_PROB,
            rng_seed: 0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.last_step_weight.is_finite() && self.last_step_weight >= 1.0) {
            return Err(Error::InvalidInput(format!(
                "last_step_weight must be >= 1, got {}",
                self.last_step_weight
            )));
        }
        if !(self.eps_prob > 0.0 && self.eps_prob < 1e-3) {
            return Err(Error::InvalidInput(format!(
                "eps_prob must lie in (0, 1e-3), got {}",
                self.eps_prob
            )));
        }
        Ok(())
    }

    /// `alpha_t` for 1-based step `position` out of `total`.
    pub fn step_weight(&self, position: usize, total: usize) -> f64 {
        if position == total {
            self.last_step_weight
        } else {
            1.0
        }
    }
}

/// Realized buffer factors for one trajectory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BufferFactors {
    pub beta: Vec<bool>,
}

/// Draws `beta_t ~ Bernoulli(p_buffer_t)` for every step but the last, whose
/// factor is fixed at 0. With the buffer disabled nothing is drawn and every
/// factor is 0.
pub fn sample_buffer_factors<R: Rng + ?Sized>(
    probs: &[StepProbabilities],
    config: &LossConfig,
    rng: &mut R,
) -> BufferFactors {
    let total = probs.len();
    let beta = probs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if !config.buffer_enabled || i + 1 == total {
                false
            } else {
                rng.gen::<f64>() < p.p_buffer
            }
        })
        .collect();
    BufferFactors { beta }
}

fn realized_target(p: &StepProbabilities, label: Label, beta: bool) -> f64 {
    let buffer = if beta { p.p_buffer } else { 0.0 };
    p.target(label) + buffer
}

/// `-alpha * log(p_target + beta * p_buffer)`, log argument floored at
/// [`EPS_PROB`].
pub fn step_loss_realized(p: &StepProbabilities, label: Label, beta: bool, alpha: f64) -> f64 {
    step_loss_with_eps(p, label, beta, alpha, EPS_PROB)
}

fn step_loss_with_eps(
    p: &StepProbabilities,
    label: Label,
    beta: bool,
    alpha: f64,
    eps: f64,
) -> f64 {
    let g = realized_target(p, label, beta).clamp(eps, 1.0);
    -alpha * g.ln()
}

fn check_lengths(probs: usize, labels: usize, betas: usize) -> Result<()> {
    if probs == 0 {
        return Err(Error::InvalidInput("empty step sequence".into()));
    }
    if probs != labels || probs != betas {
        return Err(Error::InvalidInput(format!(
            "length mismatch: {probs} probabilities, {labels} labels, {betas} buffer factors"
        )));
    }
    Ok(())
}

/// Mean weighted step loss for one trajectory with realized buffer factors.
pub fn trajectory_loss(
    probs: &[StepProbabilities],
    labels: &PseudoLabels,
    betas: &BufferFactors,
    config: &LossConfig,
) -> Result<f64> {
    check_lengths(probs.len(), labels.len(), betas.beta.len())?;
    let total = probs.len();
    let sum: f64 = probs
        .iter()
        .zip(&labels.labels)
        .zip(&betas.beta)
        .enumerate()
        .map(|(i, ((p, &label), &beta))| {
            let alpha = config.step_weight(i + 1, total);
            step_loss_with_eps(p, label, beta, alpha, config.eps_prob)
        })
        .sum();
    Ok(sum / total as f64)
}

/// Expected trajectory loss over the buffer factors. The last step (and every
/// step when the buffer is disabled) has `beta = 0` deterministically.
pub fn expected_trajectory_loss(
    probs: &[StepProbabilities],
    labels: &PseudoLabels,
    config: &LossConfig,
) -> Result<f64> {
    check_lengths(probs.len(), labels.len(), labels.len())?;
    let total = probs.len();
    let sum: f64 = probs
        .iter()
        .zip(&labels.labels)
        .enumerate()
        .map(|(i, (p, &label))| {
            let alpha = config.step_weight(i + 1, total);
            if config.buffer_enabled && i + 1 < total {
                alpha * expected_step_loss(p, label)
            } else {
                step_loss_with_eps(p, label, false, alpha, config.eps_prob)
            }
        })
        .sum();
    Ok(sum / total as f64)
}

/// Closed forms on raw `(p_target, p_buffer)` coordinates, with no clamping.
///
/// `p_target` is `p_right` for label 1 and `p_wrong` for label 0. Partials
/// treat the two coordinates as independent; the remaining simplex component
/// absorbs any change.
pub mod closed_form {
    /// `-(b log(t + b) + (1 - b) log t)`
    pub fn expected_loss(target: f64, buffer: f64) -> f64 {
        -(buffer * (target + buffer).ln() + (1.0 - buffer) * target.ln())
    }

    /// `-(b / (t + b) + (1 - b) / t)`
    pub fn d_target(target: f64, buffer: f64) -> f64 {
        -(buffer / (target + buffer) + (1.0 - buffer) / target)
    }

    /// `-(log((t + b) / t) + b / (t + b))`
    pub fn d_buffer(target: f64, buffer: f64) -> f64 {
        -(((target + buffer) / target).ln() + buffer / (target + buffer))
    }

    /// `b^2 / (r (r + b))`
    pub fn gap(right: f64, buffer: f64) -> f64 {
        buffer * buffer / (right * (right + buffer))
    }
}

/// Expected loss over `beta ~ Bernoulli(p_buffer)` at one step, unit weight.
pub fn expected_step_loss(p: &StepProbabilities, label: Label) -> f64 {
    let target = p.target(label).max(EPS_PROB);
    let buffer = p.p_buffer;
    let value = closed_form::expected_loss(target, buffer);
    value.max(0.0)
}

/// Partials of [`expected_step_loss`] with respect to the target probability
/// and the buffer probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedGrad {
    pub d_target: f64,
    pub d_buffer: f64,
}

pub fn expected_grad(p: &StepProbabilities, label: Label) -> ExpectedGrad {
    let target = p.target(label).max(EPS_PROB);
    ExpectedGrad {
        d_target: closed_form::d_target(target, p.p_buffer),
        d_buffer: closed_form::d_buffer(target, p.p_buffer),
    }
}

/// Binary cross-entropy on `p_right`: `-log p_right` or `-log(1 - p_right)`.
pub fn ce_step_loss(p: &StepProbabilities, label: Label) -> f64 {
    let arg = match label {
        Label::Right => p.p_right,
        Label::Wrong => 1.0 - p.p_right,
    };
    -arg.clamp(EPS_PROB, 1.0).ln()
}

/// Derivative of [`ce_step_loss`] with respect to `p_right`.
pub fn ce_grad(p: &StepProbabilities, label: Label) -> f64 {
    match label {
        Label::Right => -1.0 / p.p_right.max(EPS_PROB),
        Label::Wrong => 1.0 / (1.0 - p.p_right).max(EPS_PROB),
    }
}

/// Amount by which the buffered gradient norm on `p_right` falls short of
/// the cross-entropy one (label 1).
pub fn grad_gap(p: &StepProbabilities) -> f64 {
    closed_form::gap(p.p_right.max(EPS_PROB), p.p_buffer)
}

/// Gradient of the realized step loss with respect to the logits
/// `(z_right, z_wrong, z_buffer)`, with `beta` held constant.
///
/// `dL/dz_k = alpha * (p_k - s_k / g)` where `g = p_target + beta p_buffer`
/// and `s` is the part of `g` contributed by component `k`.
pub fn realized_logit_grad(
    p: &StepProbabilities,
    label: Label,
    beta: bool,
    alpha: f64,
) -> [f64; 3] {
    let probs = p.as_array();
    let target_idx = target_index(label);
    let mut s = [0.0; 3];
    s[target_idx] = probs[target_idx];
    if beta {
        s[2] = probs[2];
    }
    let g = (s[0] + s[1] + s[2]).max(EPS_PROB);
    [0, 1, 2].map(|k| alpha * (probs[k] - s[k] / g))
}

/// Gradient of `alpha * expected_step_loss` with respect to the logits,
/// chained through the softmax Jacobian.
pub fn expected_logit_grad(p: &StepProbabilities, label: Label, alpha: f64) -> [f64; 3] {
    let grad = expected_grad(p, label);
    let mut dp = [0.0; 3];
    dp[target_index(label)] = grad.d_target;
    dp[2] = grad.d_buffer;
    softmax_backward(&p.as_array(), &dp).map(|g| alpha * g)
}

/// Chains `dL/dp` through the normalized exponential:
/// `dL/dz_k = p_k (dL/dp_k - sum_j p_j dL/dp_j)`.
pub fn softmax_backward(probs: &[f64; 3], dp: &[f64; 3]) -> [f64; 3] {
    let dot: f64 = probs.iter().zip(dp).map(|(p, g)| p * g).sum();
    [0, 1, 2].map(|k| probs[k] * (dp[k] - dot))
}

fn target_index(label: Label) -> usize {
    match label {
        Label::Right => 0,
        Label::Wrong => 1,
    }
}
