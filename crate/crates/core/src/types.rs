//! Domain types shared by every module: trajectories, steps, and the
//! right/wrong/buffer probability simplex.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to every probability before it reaches a logarithm or a
/// denominator.
pub const EPS_PROB: f64 = 1e-12;

/// Binary correctness label for a step (or an outcome).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Wrong,
    Right,
}

impl Label {
    /// Maps a validated outcome (0 or 1) to a label.
    pub fn from_outcome(outcome: u8) -> Self {
        if outcome == 1 {
            Label::Right
        } else {
            Label::Wrong
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Label::Wrong => 0,
            Label::Right => 1,
        }
    }
}

/// One reasoning step: an opaque token list plus its place in the trajectory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepContent {
    pub tokens: Vec<String>,
    /// 1-based.
    pub position: usize,
    pub is_last: bool,
}

/// An ordered sequence of steps with its outcome label.
///
/// `gold_first_error` is only present in synthetic or evaluation data. The
/// training path never reads it: it goes through [`Trajectory::weak_view`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub id: String,
    pub steps: Vec<StepContent>,
    pub outcome: u8,
    pub gold_first_error: Option<usize>,
}

/// What a weakly supervised learner is allowed to see of a trajectory.
#[derive(Debug, Clone, Copy)]
pub struct WeakView<'a> {
    pub id: &'a str,
    pub steps: &'a [StepContent],
    pub outcome: Label,
}

impl Trajectory {
    /// Builds a trajectory from per-step token lists, filling in positions and
    /// the last-step flag, then validates it.
    pub fn from_token_steps(
        id: impl Into<String>,
        steps: Vec<Vec<String>>,
        outcome: u8,
        gold_first_error: Option<usize>,
    ) -> Result<Self> {
        let total = steps.len();
        let steps = steps
            .into_iter()
            .enumerate()
            .map(|(i, tokens)| StepContent {
                tokens,
                position: i + 1,
                is_last: i + 1 == total,
            })
            .collect();
        validate_trajectory(Trajectory {
            id: id.into(),
            steps,
            outcome,
            gold_first_error,
        })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn weak_view(&self) -> WeakView<'_> {
        WeakView {
            id: &self.id,
            steps: &self.steps,
            outcome: Label::from_outcome(self.outcome),
        }
    }
}

/// Checks every trajectory invariant and hands the trajectory back unchanged.
pub fn validate_trajectory(t: Trajectory) -> Result<Trajectory> {
    if t.steps.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if t.outcome > 1 {
        return Err(Error::NonBinaryOutcome(i64::from(t.outcome)));
    }
    let total = t.steps.len();
    if let Some(index) = t.gold_first_error {
        if index == 0 || index > total {
            return Err(Error::IndexOutOfRange {
                index,
                steps: total,
            });
        }
    }
    for (i, step) in t.steps.iter().enumerate() {
        if step.position != i + 1 || step.is_last != (i + 1 == total) {
            return Err(Error::InvalidInput(format!(
                "trajectory {}: step {} has position {} and is_last {}",
                t.id,
                i + 1,
                step.position,
                step.is_last
            )));
        }
    }
    Ok(t)
}

/// A point on the right/wrong/buffer simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepProbabilities {
    pub p_right: f64,
    pub p_wrong: f64,
    pub p_buffer: f64,
}

impl StepProbabilities {
    /// Clamps each component to at least [`EPS_PROB`] and renormalizes.
    ///
    /// Accepts boundary points such as `(0.7, 0.0, 0.3)`; rejects negative,
    /// non-finite, or non-normalized input.
    pub fn new(p_right: f64, p_wrong: f64, p_buffer: f64) -> Result<Self> {
        let parts = [p_right, p_wrong, p_buffer];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidInput(format!(
                "probabilities must be finite and nonnegative, got {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(Self::clamp_normalize(parts))
    }

    fn clamp_normalize(parts: [f64; 3]) -> Self {
        let clamped = parts.map(|p| p.max(EPS_PROB));
        let sum: f64 = clamped.iter().sum();
        StepProbabilities {
            p_right: clamped[0] / sum,
            p_wrong: clamped[1] / sum,
            p_buffer: clamped[2] / sum,
        }
    }

    /// Components in logit order: right, wrong, buffer.
    pub fn as_array(&self) -> [f64; 3] {
        [self.p_right, self.p_wrong, self.p_buffer]
    }

    /// The probability assigned to the class named by `label`.
    pub fn target(&self, label: Label) -> f64 {
        match label {
            Label::Right => self.p_right,
            Label::Wrong => self.p_wrong,
        }
    }
}

/// Normalized exponential of `(z_right, z_wrong, z_buffer)` with
/// max-subtraction, followed by the [`EPS_PROB`] clamp.
pub fn simplex_from_logits(logits: [f64; 3]) -> Result<StepProbabilities> {
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "logits must be finite, got {logits:?}"
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.map(|z| (z - max).exp());
    let sum: f64 = exps.iter().sum();
    Ok(StepProbabilities::clamp_normalize(exps.map(|e| e / sum)))
}
