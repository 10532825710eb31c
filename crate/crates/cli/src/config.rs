//! Run configuration: one TOML document with a table per module.
//!
//! ```toml
//! [gen]
//! num_traces = 5000
//! seed = 7
//!
//! [train]
//! epochs = 10
//!
//! [loss]
//! last_step_weight = 3.0
//! buffer_enabled = true
//! mode = "stochastic"
//! ```
//!
//! Every key is optional. Unknown keys are rejected.

use std::fs;
use std::path::Path;

use prmlab_core::datagen::GenConfig;
use prmlab_core::eval::{default_grid, DEFAULT_THRESHOLD};
use prmlab_core::model::{FeaturizerConfig, TrainConfig};
use prmlab_core::theory::DEFAULT_EPSILONS;
use prmlab_core::{LossConfig, LossMode};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSection {
    pub num_traces: usize,
    pub steps_min: usize,
    pub steps_max: usize,
    pub error_rate: f64,
    pub outcome_flip_rate: f64,
    pub vocab_overlap: f64,
    pub tokens_per_step: usize,
    pub seed: u64,
}

impl Default for GenSection {
    fn default() -> Self {
        let g = GenConfig::default();
        GenSection {
            num_traces: g.num_traces,
            steps_min: g.steps_min,
            steps_max: g.steps_max,
            error_rate: g.error_rate,
            outcome_flip_rate: g.outcome_flip_rate,
            vocab_overlap: g.vocab_overlap,
            tokens_per_step: g.tokens_per_step,
            seed: g.seed,
        }
    }
}

impl GenSection {
    pub fn to_core(&self) -> GenConfig {
        GenConfig {
            num_traces: self.num_traces,
            steps_min: self.steps_min,
            steps_max: self.steps_max,
            error_rate: self.error_rate,
            outcome_flip_rate: self.outcome_flip_rate,
            vocab_overlap: self.vocab_overlap,
            tokens_per_step: self.tokens_per_step,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturizerSection {
    pub dim: usize,
    pub hash_seed: u64,
    pub use_position: bool,
}

impl Default for FeaturizerSection {
    fn default() -> Self {
        let f = FeaturizerConfig::default();
        FeaturizerSection {
            dim: f.dim,
            hash_seed: f.hash_seed,
            use_position: f.use_position,
        }
    }
}

impl FeaturizerSection {
    pub fn to_core(&self) -> FeaturizerConfig {
        FeaturizerConfig {
            dim: self.dim,
            hash_seed: self.hash_seed,
            use_position: self.use_position,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden_dim: usize,
    /// Seeds parameter initialization.
    pub init_seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            hidden_dim: 64,
            init_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: 10,
            seed: t.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub last_step_weight: f64,
    pub buffer_enabled: bool,
    pub mode: LossMode,
    pub eps_prob: f64,
    pub rng_seed: u64,
}

impl Default for LossSection {
    fn default() -> Self {
        let l = LossConfig::default();
        LossSection {
            last_step_weight: l.last_step_weight,
            buffer_enabled: l.buffer_enabled,
            mode: l.mode,
            eps_prob: l.eps_prob,
            rng_seed: l.rng_seed,
        }
    }
}

impl LossSection {
    pub fn to_core(&self) -> LossConfig {
        LossConfig {
            last_step_weight: self.last_step_weight,
            buffer_enabled: self.buffer_enabled,
            mode: self.mode,
            eps_prob: self.eps_prob,
            rng_seed: self.rng_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub threshold: f64,
    pub grid: Vec<f64>,
    pub bon_n: Vec<usize>,
    /// Held-out fraction when `ablate` gets no separate eval dataset.
    pub holdout_fraction: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            threshold: DEFAULT_THRESHOLD,
            grid: default_grid(),
            bon_n: vec![1, 2, 4, 8],
            holdout_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSection {
    pub seed: u64,
    pub grad_points: usize,
    pub grad_tolerance: f64,
    pub grid_resolution: usize,
    pub epsilons: Vec<f64>,
    pub mc_points: usize,
    pub mc_samples: usize,
    pub gradcheck_trials: usize,
    pub gradcheck_tolerance: f64,
}

impl Default for CheckSection {
    fn default() -> Self {
        CheckSection {
            seed: 0,
            grad_points: 1000,
            grad_tolerance: 1e-5,
            grid_resolution: 100,
            epsilons: DEFAULT_EPSILONS.to_vec(),
            mc_points: 200,
            mc_samples: 100_000,
            gradcheck_trials: 50,
            gradcheck_tolerance: 1e-4,
        }
    }
}

/// Process-level settings. They never change results, so manifests omit them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub out_dir: Option<String>,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub gen: GenSection,
    pub featurizer: FeaturizerSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub loss: LossSection,
    pub eval: EvalSection,
    pub check: CheckSection,
    #[serde(skip_serializing)]
    pub run: RunSection,
}

fn invalid(section: &str, err: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("[{section}] {err}"))
}

fn field(section: &str, name: &str, msg: &str) -> CliError {
    CliError::Config(format!("[{section}] {name} {msg}"))
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Config, CliError> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
            epochs: self.train.epochs,
            loss: self.loss.to_core(),
            seed: self.train.seed,
        }
    }

    /// Checks every section; the error names the offending field.
    pub fn validate(&self) -> Result<(), CliError> {
        self.gen
            .to_core()
            .validate()
            .map_err(|e| invalid("gen", e))?;
        if self.gen.tokens_per_step == 0 {
            return Err(field("gen", "tokens_per_step", "must be positive"));
        }
        self.featurizer
            .to_core()
            .validate()
            .map_err(|e| invalid("featurizer", e))?;
        self.loss
            .to_core()
            .validate()
            .map_err(|e| invalid("loss", e))?;
        let t = &self.train;
        if !(t.learning_rate.is_finite() && t.learning_rate > 0.0) {
            return Err(field("train", "learning_rate", "must be > 0"));
        }
        if t.batch_size == 0 {
            return Err(field("train", "batch_size", "must be positive"));
        }
        if t.epochs == 0 {
            return Err(field("train", "epochs", "must be positive"));
        }
        let e = &self.eval;
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        if !open_unit(e.threshold) {
            return Err(field("eval", "threshold", "must lie in (0, 1)"));
        }
        if e.grid.is_empty() || !e.grid.iter().all(|&x| open_unit(x)) {
            return Err(field(
                "eval",
                "grid",
                "must be a non-empty list of values in (0, 1)",
            ));
        }
        if e.bon_n.is_empty() || e.bon_n.contains(&0) {
            return Err(field(
                "eval",
                "bon_n",
                "must be a non-empty list of positive integers",
            ));
        }
        if !(e.holdout_fraction > 0.0 && e.holdout_fraction < 1.0) {
            return Err(field("eval", "holdout_fraction", "must lie in (0, 1)"));
        }
        let c = &self.check;
        if c.grid_resolution < 10 {
            return Err(field("check", "grid_resolution", "must be >= 10"));
        }
        if c.epsilons.is_empty() {
            return Err(field("check", "epsilons", "must not be empty"));
        }
        for (name, v) in [
            ("grad_points", c.grad_points),
            ("mc_points", c.mc_points),
            ("mc_samples", c.mc_samples),
            ("gradcheck_trials", c.gradcheck_trials),
        ] {
            if v == 0 {
                return Err(field("check", name, "must be positive"));
            }
        }
        if self.run.workers == Some(0) {
            return Err(field("run", "workers", "must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c: Config = toml::from_str("").unwrap();
        assert_eq!(c, Config::default());
        c.validate().unwrap();
        assert_eq!(c.eval.grid.len(), 19);
        assert_eq!(c.model.hidden_dim, 64);
    }

    #[test]
    fn partial_section_keeps_other_defaults() {
        let c: Config = toml::from_str("[loss]\nmode = \"expected\"\n").unwrap();
        assert_eq!(c.loss.mode, LossMode::Expected);
        assert_eq!(c.loss.last_step_weight, 3.0);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = toml::from_str::<Config>("[train]\nlearnin_rate = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("learnin_rate"));
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = Config::default();
        c.train.batch_size = 0;
        assert!(c.validate().unwrap_err().to_string().contains("batch_size"));
        let mut c = Config::default();
        c.loss.last_step_weight = 0.5;
        assert!(c
            .validate()
            .unwrap_err()
            .to_string()
            .contains("last_step_weight"));
        let mut c = Config::default();
        c.gen.error_rate = 2.0;
        assert!(c.validate().unwrap_err().to_string().contains("error_rate"));
    }
}
