use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use prmlab_core::datagen::generate;
use prmlab_core::eval::{
    bon_accuracy, first_error_f1, score_dataset, sweep_scored, BonCandidate, BonProblem,
};
use prmlab_core::ingest::{read_candidates, read_dataset, write_dataset};
use prmlab_core::model::{load_checkpoint, save_checkpoint, train, ScorerParameters};
use prmlab_core::theory::{
    gradcheck_model, verify_buffer_collapse, verify_expected_grad, verify_mc_consistency,
    verify_norm_gap, CollapseReport, GradIdentityReport, NormGapReport,
};
use serde::Serialize;

use crate::ablate::{holdout_split, run_ablation, AblationSetup};
use crate::config::Config;
use crate::manifest::{write_atomic, ManifestBuilder};
use crate::{resolve_out, with_suffix, Cli, CliError, Command, TrainingFlags};

fn set<T: Clone>(target: &mut T, value: &Option<T>) {
    if let Some(v) = value {
        *target = v.clone();
    }
}

fn apply_training(config: &mut Config, f: &TrainingFlags) {
    set(&mut config.train.epochs, &f.epochs);
    set(&mut config.train.learning_rate, &f.lr);
    set(&mut config.train.batch_size, &f.batch_size);
    set(&mut config.train.seed, &f.seed);
    set(&mut config.loss.last_step_weight, &f.alpha);
    set(&mut config.loss.buffer_enabled, &f.buffer);
    set(&mut config.loss.mode, &f.mode);
    set(&mut config.loss.rng_seed, &f.loss_seed);
    set(&mut config.model.hidden_dim, &f.hidden);
    set(&mut config.model.init_seed, &f.init_seed);
    set(&mut config.featurizer.dim, &f.dim);
    set(&mut config.featurizer.hash_seed, &f.hash_seed);
    set(&mut config.featurizer.use_position, &f.use_position);
}

/// Copies flag values over the loaded configuration.
pub(crate) fn apply_overrides(config: &mut Config, command: &Command) {
    match command {
        Command::Gen(a) => {
            let g = &mut config.gen;
            set(&mut g.seed, &a.seed);
            set(&mut g.num_traces, &a.num);
            set(&mut g.steps_min, &a.steps_min);
            set(&mut g.steps_max, &a.steps_max);
            set(&mut g.error_rate, &a.error_rate);
            set(&mut g.outcome_flip_rate, &a.flip_rate);
            set(&mut g.vocab_overlap, &a.overlap);
            set(&mut g.tokens_per_step, &a.tokens);
        }
        Command::Train(a) => apply_training(config, &a.flags),
        Command::Eval(a) => set(&mut config.eval.threshold, &a.threshold),
        Command::Sweep(a) => set(&mut config.eval.grid, &a.grid),
        Command::Bon(a) => set(&mut config.eval.bon_n, &a.n),
        Command::Gradcheck(a) => {
            set(&mut config.check.gradcheck_trials, &a.trials);
            set(&mut config.check.gradcheck_tolerance, &a.tolerance);
            set(&mut config.check.seed, &a.seed);
        }
        Command::TheoryCheck(a) => {
            set(&mut config.check.grad_points, &a.points);
            set(&mut config.check.grid_resolution, &a.grid_resolution);
            set(&mut config.check.seed, &a.seed);
        }
        Command::McCheck(a) => {
            set(&mut config.check.mc_points, &a.points);
            set(&mut config.check.mc_samples, &a.samples);
            set(&mut config.check.seed, &a.seed);
        }
        Command::Ablate(a) => {
            apply_training(config, &a.flags);
            set(&mut config.eval.threshold, &a.threshold);
        }
    }
}

/// Output locations for one run: the primary artifact and its companions.
struct Outputs {
    primary: PathBuf,
}

impl Outputs {
    fn new(config: &Config, out: &Path) -> anyhow::Result<Self> {
        let primary = resolve_out(config, out);
        if let Some(dir) = primary.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        }
        Ok(Outputs { primary })
    }

    fn companion(&self, suffix: &str) -> PathBuf {
        with_suffix(&self.primary, suffix)
    }

    fn manifest(&self) -> PathBuf {
        self.companion(".manifest.json")
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut text = String::new();
    for row in rows {
        text.push_str(&serde_json::to_string(row)?);
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

pub(crate) fn dispatch(cli: &Cli, config: &Config) -> Result<(), CliError> {
    let name = command_name(&cli.command);
    let mut manifest = ManifestBuilder::new(name, config);
    if let Some(path) = &cli.config {
        manifest.input("config", path, path)?;
    }
    let outputs = match &cli.command {
        Command::Gen(a) => {
            let out = Outputs::new(config, &a.out)?;
            let data = generate(&config.gen.to_core())?;
            write_dataset(&data, &out.primary)?;
            manifest.artifact("dataset", &out.primary);
            println!(
                "wrote {} trajectories to {}",
                data.len(),
                out.primary.display()
            );
            out
        }
        Command::Train(a) => {
            manifest.input("data", &a.data, &a.data)?;
            let data = read_dataset(&a.data)?;
            let init = ScorerParameters::init(
                config.featurizer.to_core(),
                config.model.hidden_dim,
                config.model.init_seed,
            )?;
            let outcome = train(&data, init, &config.train_config())?;
            let out = Outputs::new(config, &a.out)?;
            save_checkpoint(&outcome.params, &out.primary)?;
            let trace_path = out.companion(".trace.json");
            write_json(&trace_path, &outcome.trace)?;
            manifest.artifact("checkpoint", &out.primary);
            manifest.artifact("loss_trace", &trace_path);
            for s in &outcome.trace {
                println!("epoch {:>3}  loss {:.6}", s.epoch, s.mean_loss);
            }
            out
        }
        Command::Eval(a) => {
            manifest.input("data", &a.data, &a.data)?;
            manifest.input("checkpoint", &a.ckpt, &a.ckpt)?;
            let data = read_dataset(&a.data)?;
            let params = load_checkpoint(&a.ckpt)?;
            let (report, log) = first_error_f1(&data, &params, config.eval.threshold)?;
            let out = Outputs::new(config, &a.out)?;
            let log_path = out.companion(".predictions.jsonl");
            write_json(&out.primary, &report)?;
            write_jsonl(&log_path, &log)?;
            manifest.artifact("report", &out.primary);
            manifest.artifact("predictions", &log_path);
            println!(
                "threshold {}  error_acc {}  correct_acc {}  f1 {:.4}",
                report.threshold,
                fmt_opt(report.error_accuracy),
                fmt_opt(report.correct_accuracy),
                report.f1
            );
            out
        }
        Command::Sweep(a) => {
            manifest.input("data", &a.data, &a.data)?;
            manifest.input("checkpoint", &a.ckpt, &a.ckpt)?;
            let data = read_dataset(&a.data)?;
            let params = load_checkpoint(&a.ckpt)?;
            let scored = score_dataset(&data, &params);
            let table = sweep_scored(&scored, &config.eval.grid)?;
            let out = Outputs::new(config, &a.out)?;
            let scores_path = out.companion(".scores.jsonl");
            write_json(&out.primary, &table)?;
            let rows: Vec<ScoreLine<'_>> = scored
                .iter()
                .map(|s| ScoreLine {
                    id: &s.id,
                    gold: s.gold,
                    right_scores: &s.right_scores,
                })
                .collect();
            write_jsonl(&scores_path, &rows)?;
            manifest.artifact("sweep_table", &out.primary);
            manifest.artifact("step_scores", &scores_path);
            println!("threshold  error_acc  correct_acc  f1");
            for r in &table.rows {
                println!(
                    "{:>9.4}  {:>9}  {:>11}  {:.4}",
                    r.threshold,
                    fmt_opt(r.error_accuracy),
                    fmt_opt(r.correct_accuracy),
                    r.f1
                );
            }
            println!(
                "best threshold {} f1 {:.4}",
                table.best_threshold, table.best_f1
            );
            out
        }
        Command::Bon(a) => {
            manifest.input("candidates", &a.candidates, &a.candidates)?;
            manifest.input("checkpoint", &a.ckpt, &a.ckpt)?;
            let groups = read_candidates(&a.candidates)?;
            let params = load_checkpoint(&a.ckpt)?;
            let mut problems = Vec::with_capacity(groups.len());
            for g in &groups {
                let trajectories = g
                    .candidates
                    .iter()
                    .map(|c| c.to_trajectory())
                    .collect::<prmlab_core::Result<Vec<_>>>()?;
                let scored = score_dataset(&trajectories, &params);
                problems.push(BonProblem {
                    id: g.problem_id.clone(),
                    candidates: scored
                        .into_iter()
                        .zip(&g.candidates)
                        .map(|(s, c)| BonCandidate {
                            right_scores: s.right_scores,
                            is_correct: c.is_correct == 1,
                        })
                        .collect(),
                });
            }
            let rows = bon_accuracy(&problems, &config.eval.bon_n)?;
            let out = Outputs::new(config, &a.out)?;
            write_json(
                &out.primary,
                &BonTable {
                    problems: problems.len(),
                    rows: &rows,
                },
            )?;
            manifest.artifact("bon_table", &out.primary);
            for r in &rows {
                println!("n {:>4}  accuracy {:.4}", r.n, r.accuracy);
            }
            out
        }
        Command::Gradcheck(a) => {
            let c = &config.check;
            let report = gradcheck_model(c.gradcheck_trials, c.seed, c.gradcheck_tolerance);
            let out = Outputs::new(config, &a.out)?;
            write_json(&out.primary, &report)?;
            manifest.artifact("report", &out.primary);
            println!(
                "{} models, {} parameters, max relative error {:.3e}",
                report.trials, report.parameters_checked, report.max_relative_error
            );
            finish_check(manifest, &out, report.passed)?;
            return Ok(());
        }
        Command::TheoryCheck(a) => {
            let c = &config.check;
            let report = TheoryReport {
                expected_grad: verify_expected_grad(c.grad_points, c.seed, c.grad_tolerance),
                norm_gap: verify_norm_gap(c.grid_resolution, 1e-3),
                buffer_collapse: verify_buffer_collapse(&c.epsilons),
            };
            let passed = report.expected_grad.passed
                && report.norm_gap.passed
                && report.buffer_collapse.passed;
            let out = Outputs::new(config, &a.out)?;
            write_json(&out.primary, &report)?;
            manifest.artifact("report", &out.primary);
            println!(
                "expected-grad max rel error {:.3e}; norm-gap max error {:.3e}, {} violations; buffer-collapse monotone {}",
                report.expected_grad.max_relative_error,
                report.norm_gap.max_identity_error,
                report.norm_gap.violations,
                report.buffer_collapse.monotone
            );
            finish_check(manifest, &out, passed)?;
            return Ok(());
        }
        Command::McCheck(a) => {
            let c = &config.check;
            let report = verify_mc_consistency(c.mc_points, c.mc_samples, c.seed);
            let out = Outputs::new(config, &a.out)?;
            write_json(&out.primary, &report)?;
            manifest.artifact("report", &out.primary);
            println!(
                "{} points x {} samples, {} outside the {}-sigma band",
                report.checks, report.samples, report.band_violations, report.band
            );
            finish_check(manifest, &out, report.band_violations <= 2)?;
            return Ok(());
        }
        Command::Ablate(a) => {
            manifest.input("data", &a.data, &a.data)?;
            let data = read_dataset(&a.data)?;
            let held;
            let (train_set, eval_set) = match &a.eval {
                Some(path) => {
                    manifest.input("eval_data", path, path)?;
                    held = read_dataset(path)?;
                    (&data[..], &held[..])
                }
                None => holdout_split(&data, config.eval.holdout_fraction),
            };
            if train_set.is_empty() || eval_set.is_empty() {
                return Err(anyhow!("ablation needs non-empty train and eval splits").into());
            }
            let featurizer = config.featurizer.to_core();
            let train_cfg = config.train_config();
            let setup = AblationSetup {
                featurizer: &featurizer,
                hidden_dim: config.model.hidden_dim,
                init_seed: config.model.init_seed,
                train: &train_cfg,
                threshold: config.eval.threshold,
                grid: &config.eval.grid,
            };
            let table = run_ablation(train_set, eval_set, &setup)?;
            let out = Outputs::new(config, &a.out)?;
            write_json(&out.primary, &table)?;
            manifest.artifact("ablation_table", &out.primary);
            println!(
                "buffer  alpha  f1@{:<6} best_f1  best_threshold",
                table.threshold
            );
            for r in &table.rows {
                println!(
                    "{:<6}  {:>5}  {:>9.4} {:>7.4}  {}",
                    if r.buffer_enabled { "on" } else { "off" },
                    r.last_step_weight,
                    r.f1_at_threshold,
                    r.best_f1,
                    r.best_threshold
                );
            }
            for b in &table.baselines {
                println!("baseline {}: best_f1 {:.4}", b.name, b.best_f1);
            }
            out
        }
    };
    manifest.write(&outputs.manifest())?;
    Ok(())
}

fn finish_check(manifest: ManifestBuilder, out: &Outputs, passed: bool) -> Result<(), CliError> {
    manifest.write(&out.manifest())?;
    if passed {
        println!("PASS");
        Ok(())
    } else {
        println!("FAIL");
        Err(anyhow!("check failed; see {}", out.primary.display()).into())
    }
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::Gen(_) => "gen",
        Command::Train(_) => "train",
        Command::Eval(_) => "eval",
        Command::Sweep(_) => "sweep",
        Command::Bon(_) => "bon",
        Command::Gradcheck(_) => "gradcheck",
        Command::TheoryCheck(_) => "theory-check",
        Command::McCheck(_) => "mc-check",
        Command::Ablate(_) => "ablate",
    }
}

#[derive(Serialize)]
struct ScoreLine<'a> {
    id: &'a str,
    gold: Option<usize>,
    right_scores: &'a [f64],
}

#[derive(Serialize)]
struct BonTable<'a> {
    problems: usize,
    rows: &'a [prmlab_core::eval::BonRow],
}

#[derive(Serialize)]
struct TheoryReport {
    expected_grad: GradIdentityReport,
    norm_gap: NormGapReport,
    buffer_collapse: CollapseReport,
}
