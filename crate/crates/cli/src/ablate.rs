//! Buffer on/off by last-step weight 1 or 3, trained from one shared
//! initialization and scored on the same held-out set.

use prmlab_core::eval::{score_dataset, sweep_scored, ConstantScorer, EvalReport};
use prmlab_core::model::{train, FeaturizerConfig, ScorerParameters, StepScorer, TrainConfig};
use prmlab_core::{Result, Trajectory};
use serde::Serialize;

/// `(buffer_enabled, last_step_weight)` for each row, in table order.
pub const ARMS: [(bool, f64); 4] = [(true, 3.0), (true, 1.0), (false, 3.0), (false, 1.0)];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub buffer_enabled: bool,
    pub last_step_weight: f64,
    pub first_epoch_loss: f64,
    pub final_epoch_loss: f64,
    /// F1 at the configured threshold.
    pub f1_at_threshold: f64,
    pub best_threshold: f64,
    pub best_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineRow {
    pub name: &'static str,
    pub best_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTable {
    pub threshold: f64,
    pub train_size: usize,
    pub eval_size: usize,
    pub rows: Vec<AblationRow>,
    pub baselines: Vec<BaselineRow>,
}

impl AblationTable {
    pub fn row(&self, buffer_enabled: bool, last_step_weight: f64) -> Option<&AblationRow> {
        self.rows
            .iter()
            .find(|r| r.buffer_enabled == buffer_enabled && r.last_step_weight == last_step_weight)
    }
}

pub struct AblationSetup<'a> {
    pub featurizer: &'a FeaturizerConfig,
    pub hidden_dim: usize,
    pub init_seed: u64,
    /// Loss fields other than the buffer switch and last-step weight are kept.
    pub train: &'a TrainConfig,
    pub threshold: f64,
    pub grid: &'a [f64],
}

fn best_f1<S: StepScorer + ?Sized>(eval: &[Trajectory], scorer: &S, grid: &[f64]) -> Result<f64> {
    Ok(sweep_scored(&score_dataset(eval, scorer), grid)?.best_f1)
}

pub fn run_ablation(
    train_set: &[Trajectory],
    eval_set: &[Trajectory],
    setup: &AblationSetup<'_>,
) -> Result<AblationTable> {
    let init = ScorerParameters::init(setup.featurizer.clone(), setup.hidden_dim, setup.init_seed)?;
    let mut rows = Vec::with_capacity(ARMS.len());
    for (buffer_enabled, last_step_weight) in ARMS {
        let mut cfg = setup.train.clone();
        cfg.loss.buffer_enabled = buffer_enabled;
        cfg.loss.last_step_weight = last_step_weight;
        let outcome = train(train_set, init.clone(), &cfg)?;
        let scored = score_dataset(eval_set, &outcome.params);
        let table = sweep_scored(&scored, setup.grid)?;
        let at: EvalReport = sweep_scored(&scored, &[setup.threshold])?.rows.remove(0);
        rows.push(AblationRow {
            buffer_enabled,
            last_step_weight,
            first_epoch_loss: outcome.trace.first().map_or(f64::NAN, |s| s.mean_loss),
            final_epoch_loss: outcome.trace.last().map_or(f64::NAN, |s| s.mean_loss),
            f1_at_threshold: at.f1,
            best_threshold: table.best_threshold,
            best_f1: table.best_f1,
        });
    }
    let baselines = vec![
        BaselineRow {
            name: "always-clean",
            best_f1: best_f1(eval_set, &ConstantScorer::always_clean(), setup.grid)?,
        },
        BaselineRow {
            name: "always-step-1",
            best_f1: best_f1(eval_set, &ConstantScorer::always_first_step(), setup.grid)?,
        },
    ];
    Ok(AblationTable {
        threshold: setup.threshold,
        train_size: train_set.len(),
        eval_size: eval_set.len(),
        rows,
        baselines,
    })
}

/// Splits off the trailing `holdout_fraction` of `data` for evaluation.
pub fn holdout_split(data: &[Trajectory], holdout_fraction: f64) -> (&[Trajectory], &[Trajectory]) {
    let n_eval = ((data.len() as f64) * holdout_fraction).round() as usize;
    let n_eval = n_eval.clamp(1.min(data.len()), data.len().saturating_sub(1));
    data.split_at(data.len() - n_eval)
}
