//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! A criterion listed in `KNOWN_FAILURES` is one that was implemented at its
//! stated tolerance and measured to fail. Its line still reads FAIL; the run
//! only errors if it unexpectedly starts passing or if any other criterion
//! fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use prmlab_cli::ablate::{run_ablation, AblationSetup, AblationTable};
use prmlab_cli::config::Config;
use prmlab_core::datagen::{generate, GenConfig};
use prmlab_core::eval::{harmonic_f1, predict_first_error, EvalReport};
use prmlab_core::theory::{
    gradcheck_model, verify_buffer_collapse, verify_expected_grad, verify_mc_consistency,
    verify_norm_gap, DEFAULT_EPSILONS,
};
use prmlab_core::StepProbabilities;
use serde_json::Value;

const KNOWN_FAILURES: &[u32] = &[8];

/// Mean best F1 per arm over seeds 1..=3, `(buffer_enabled, alpha, f1)`.
/// Measured with the protocol in `criterion_8`; used as regression anchors.
const ABLATION_ANCHORS: [(bool, f64, f64); 4] = [
    (true, 3.0, 0.956881),
    (true, 1.0, 0.964285),
    (false, 3.0, 0.957050),
    (false, 1.0, 0.962718),
];
const ANCHOR_TOLERANCE: f64 = 5e-3;

struct Verdict {
    pass: bool,
    detail: String,
    /// A failure of the harness itself rather than of the criterion.
    broken: Option<String>,
}

impl Verdict {
    fn new(pass: bool, detail: String) -> Self {
        Verdict {
            pass,
            detail,
            broken: None,
        }
    }
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let r = verify_expected_grad(1000, 1, 1e-5);
    let elapsed = start.elapsed();
    Verdict::new(
        r.passed && r.checks >= 1000 && elapsed < Duration::from_secs(1),
        format!(
            "{} checks, max relative error {:.3e} (tol 1e-5), {:.3}s (limit 1s)",
            r.checks,
            r.max_relative_error,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Verdict {
    let r = verify_norm_gap(100, 1e-3);
    Verdict::new(
        r.max_identity_error <= 1e-9 && r.violations == 0,
        format!(
            "{} grid points, max identity error {:.3e} (tol 1e-9), {} violations",
            r.points, r.max_identity_error, r.violations
        ),
    )
}

fn criterion_3() -> Verdict {
    let r = verify_buffer_collapse(&DEFAULT_EPSILONS);
    let at_001 = r
        .rows
        .iter()
        .find(|row| row.epsilon == 1e-2)
        .map(|row| row.gradient);
    let anchor_ok = at_001.is_some_and(|g| (g - (-5.5952)).abs() < 5e-5);
    let bounds_ok = r.rows.iter().all(|row| row.gradient <= row.bound);
    Verdict::new(
        r.passed && bounds_ok && r.monotone && anchor_ok,
        format!(
            "gradients {:?}, strictly decreasing {}, eps=0.01 gives {:.5}",
            r.rows
                .iter()
                .map(|row| format!("{:.4}", row.gradient))
                .collect::<Vec<_>>(),
            r.monotone,
            at_001.unwrap_or(f64::NAN)
        ),
    )
}

fn criterion_4() -> Verdict {
    let r = verify_mc_consistency(200, 100_000, 4);
    Verdict::new(
        r.band_violations <= 2,
        format!(
            "200 points x 2 labels x {} samples, {} outside the 4-sigma band (allowed 2), max deviation {:.2} sigma",
            r.samples, r.band_violations, r.max_normalized_deviation
        ),
    )
}

fn criterion_5() -> Verdict {
    let r = gradcheck_model(60, 5, 1e-4);
    Verdict::new(
        r.passed && r.trials >= 50,
        format!(
            "{} models, {} parameters, max relative error {:.3e} (tol 1e-4)",
            r.trials, r.parameters_checked, r.max_relative_error
        ),
    )
}

fn criterion_6() -> Verdict {
    let direct = harmonic_f1(0.638, 0.886);
    let report = EvalReport::from_counts(0.9, 1000, 638, 1000, 886);
    let ok = (direct - 0.742).abs() <= 5e-4 && report.f1 == direct;
    Verdict::new(
        ok,
        format!("F1(0.638, 0.886) = {direct:.6}, target 0.742 within 5e-4"),
    )
}

fn criterion_7() -> Verdict {
    let probs: Vec<StepProbabilities> = [0.97, 0.99, 0.11, 0.19]
        .iter()
        .map(|&r| StepProbabilities::new(r, 1.0 - r, 0.0).unwrap())
        .collect();
    let got = predict_first_error(&probs, 0.9);
    Verdict::new(
        got == Some(3),
        format!("predicted first error {got:?}, expected step 3"),
    )
}

/// Protocol: CLI defaults (hidden 64, dim 1024, lr 1e-4, batch 16, 10 epochs,
/// stochastic buffer draws), shared initialization across arms, F1 at the
/// best threshold of the default 19-point grid on the held-out set.
fn criterion_8() -> Verdict {
    let start = Instant::now();
    let config = Config::default();
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
    let mut tables: Vec<AblationTable> = Vec::new();
    for seed in 1..=3u64 {
        let gen = |seed, num_traces| {
            generate(&GenConfig {
                seed,
                num_traces,
                ..GenConfig::default()
            })
        };
        let table = gen(seed, 5000)
            .and_then(|tr| gen(seed + 1000, 1000).map(|ev| (tr, ev)))
            .and_then(|(tr, ev)| run_ablation(&tr, &ev, &setup));
        match table {
            Ok(t) => tables.push(t),
            Err(e) => {
                return Verdict {
                    pass: false,
                    detail: String::new(),
                    broken: Some(format!("ablation failed to run: {e}")),
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let mean = |buffer: bool, alpha: f64| {
        tables
            .iter()
            .map(|t| t.row(buffer, alpha).unwrap().best_f1)
            .sum::<f64>()
            / 3.0
    };
    let free = mean(true, 3.0);
    let ce = mean(false, 1.0);
    let buf_a1 = mean(true, 1.0);
    let a = free > ce;
    let b = free > buf_a1;
    let c = tables.iter().all(|t| {
        let f = t.row(true, 3.0).unwrap().best_f1;
        t.baselines.iter().all(|base| f > base.best_f1)
    });
    let fast = elapsed < Duration::from_secs(300);
    let per_seed: Vec<String> = tables
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let rows: Vec<String> = t
                .rows
                .iter()
                .map(|r| {
                    format!(
                        "{}/{}={:.4}@{}",
                        if r.buffer_enabled { "on" } else { "off" },
                        r.last_step_weight,
                        r.best_f1,
                        r.best_threshold
                    )
                })
                .collect();
            format!("seed {}: {}", i + 1, rows.join(" "))
        })
        .collect();
    let mut drift = Vec::new();
    for (buffer, alpha, anchor) in ABLATION_ANCHORS {
        let got = mean(buffer, alpha);
        let diff = (got - anchor).abs();
        if diff.is_nan() || diff > ANCHOR_TOLERANCE {
            drift.push(format!(
                "buffer {buffer} alpha {alpha}: {got:.6} vs anchor {anchor:.6}"
            ));
        }
    }
    let baseline_max = tables
        .iter()
        .flat_map(|t| t.baselines.iter().map(|b| b.best_f1))
        .fold(0.0f64, f64::max);
    Verdict {
        pass: a && b && c && fast,
        detail: format!(
            "(a) on/3 {free:.4} vs off/1 {ce:.4} margin {:+.4} {}; (b) on/3 vs on/1 {buf_a1:.4} margin {:+.4} {}; \
             (c) baselines max {baseline_max:.4} {}; {:.1}s (limit 300s)\n    {}",
            free - ce,
            if a { "ok" } else { "not met" },
            free - buf_a1,
            if b { "ok" } else { "not met" },
            if c { "ok" } else { "not met" },
            elapsed.as_secs_f64(),
            per_seed.join("\n    ")
        ),
        broken: (!drift.is_empty()).then(|| format!("regression anchors moved: {}", drift.join("; "))),
    }
}

fn run_cli(dir: &Path, workers: &str, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_prmlab"))
        .args(args)
        .current_dir(dir)
        .env_remove("PRMLAB_OUT_DIR")
        .env("PRMLAB_WORKERS", workers)
        .output()
        .map_err(|e| format!("cannot spawn prmlab: {e}"))?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "prmlab {} exited with {}: {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

const PIPELINE_CONFIG: &str = "[train]\nepochs = 4\n\n[loss]\nrng_seed = 11\n";

fn run_pipeline(dir: &Path, workers: &str) -> Result<(), String> {
    fs::write(dir.join("run.toml"), PIPELINE_CONFIG).map_err(|e| e.to_string())?;
    let steps: [&[&str]; 5] = [
        &[
            "--config", "run.toml", "gen", "--seed", "7", "--num", "5000", "--out", "data",
        ],
        &[
            "--config", "run.toml", "gen", "--seed", "1007", "--num", "1000", "--out", "heldout",
        ],
        &[
            "--config", "run.toml", "train", "--data", "data", "--out", "ckpt",
        ],
        &[
            "--config",
            "run.toml",
            "eval",
            "--data",
            "heldout",
            "--ckpt",
            "ckpt",
            "--threshold",
            "0.9",
        ],
        &[
            "--config", "run.toml", "sweep", "--data", "heldout", "--ckpt", "ckpt",
        ],
    ];
    for args in steps {
        run_cli(dir, workers, args)?;
    }
    Ok(())
}

fn read_tree(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        let name = entry.file_name().to_string_lossy().into_owned();
        files.insert(name, fs::read(entry.path()).map_err(|e| e.to_string())?);
    }
    Ok(files)
}

fn criterion_10(first: &Path, second: &Path) -> Verdict {
    let result = (|| {
        run_pipeline(first, "1")?;
        run_pipeline(second, "4")?;
        Ok::<_, String>((read_tree(first)?, read_tree(second)?))
    })();
    let (a, b) = match result {
        Ok(pair) => pair,
        Err(e) => {
            return Verdict {
                pass: false,
                detail: String::new(),
                broken: Some(e),
            }
        }
    };
    let names: Vec<&String> = a.keys().collect();
    let differing: Vec<&String> = a.keys().filter(|k| b.get(*k) != a.get(*k)).collect();
    let same_set = a.keys().eq(b.keys());
    let expected = [
        "ckpt",
        "ckpt.manifest.json",
        "ckpt.trace.json",
        "eval",
        "eval.manifest.json",
        "eval.predictions.jsonl",
        "sweep",
        "sweep.manifest.json",
        "sweep.scores.jsonl",
    ];
    let complete = expected.iter().all(|f| a.contains_key(*f));
    Verdict::new(
        same_set && differing.is_empty() && complete,
        format!(
            "{} files compared across two working directories (1 vs 4 workers), {} differ",
            names.len(),
            differing.len()
        ),
    )
}

fn parse_jsonl(path: &Path) -> Result<Vec<Value>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
        .collect()
}

/// Recomputes every sweep row from the raw per-step score log.
fn criterion_9(dir: &Path) -> Verdict {
    let result = (|| {
        let table: Value = serde_json::from_str(
            &fs::read_to_string(dir.join("sweep")).map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        let scores = parse_jsonl(&dir.join("sweep.scores.jsonl"))?;
        let eval_log = parse_jsonl(&dir.join("eval.predictions.jsonl"))?;
        let mut mismatches = 0usize;
        let rows = table["rows"].as_array().ok_or("sweep table has no rows")?;
        for row in rows {
            let thr = row["threshold"].as_f64().ok_or("row without threshold")?;
            let (mut ne, mut neh, mut nc, mut nch) = (0u64, 0u64, 0u64, 0u64);
            for line in &scores {
                let rs: Vec<f64> = line["right_scores"]
                    .as_array()
                    .ok_or("line without scores")?
                    .iter()
                    .map(|v| v.as_f64().unwrap())
                    .collect();
                let mut predicted = None;
                for (i, r) in rs.iter().enumerate() {
                    if *r < thr {
                        predicted = Some(i as u64 + 1);
                        break;
                    }
                }
                match line["gold"].as_u64() {
                    Some(g) => {
                        ne += 1;
                        neh += u64::from(predicted == Some(g));
                    }
                    None => {
                        nc += 1;
                        nch += u64::from(predicted.is_none());
                    }
                }
            }
            let ea = neh as f64 / ne as f64;
            let ca = nch as f64 / nc as f64;
            let f1 = if ea + ca > 0.0 {
                2.0 * ea * ca / (ea + ca)
            } else {
                0.0
            };
            let same = row["f1"].as_f64() == Some(f1)
                && row["error_accuracy"].as_f64() == Some(ea)
                && row["correct_accuracy"].as_f64() == Some(ca)
                && row["n_error"].as_u64() == Some(ne)
                && row["n_error_hit"].as_u64() == Some(neh)
                && row["n_correct"].as_u64() == Some(nc)
                && row["n_correct_hit"].as_u64() == Some(nch);
            mismatches += usize::from(!same);
        }
        let mut log_mismatches = 0usize;
        for (line, pred) in scores.iter().zip(&eval_log) {
            let rs = line["right_scores"].as_array().unwrap();
            let predicted = rs
                .iter()
                .position(|v| v.as_f64().unwrap() < 0.9)
                .map(|i| i as u64 + 1);
            if pred["predicted"].as_u64() != predicted || pred["id"] != line["id"] {
                log_mismatches += 1;
            }
        }
        Ok::<_, String>((
            rows.len(),
            mismatches,
            log_mismatches,
            scores.len() == eval_log.len(),
        ))
    })();
    match result {
        Ok((n, bad, bad_log, aligned)) => Verdict::new(
            n == 19 && bad == 0 && bad_log == 0 && aligned,
            format!(
                "{n} sweep rows, {bad} differ from recomputation; eval log at 0.9 has {bad_log} disagreements"
            ),
        ),
        Err(e) => Verdict {
            pass: false,
            detail: String::new(),
            broken: Some(e),
        },
    }
}

fn main() {
    // `cargo test -- --list` and filters: this target has a single entry.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let first = tempfile::tempdir().expect("temp dir");
    let second = tempfile::tempdir().expect("temp dir");
    let mut verdicts: Vec<(u32, Verdict)> = vec![
        (1, criterion_1()),
        (2, criterion_2()),
        (3, criterion_3()),
        (4, criterion_4()),
        (5, criterion_5()),
        (6, criterion_6()),
        (7, criterion_7()),
        (8, criterion_8()),
    ];
    let c10 = criterion_10(first.path(), second.path());
    verdicts.push((9, criterion_9(first.path())));
    verdicts.push((10, c10));

    let mut problems = Vec::new();
    for (n, v) in &verdicts {
        let status = if v.pass { "PASS" } else { "FAIL" };
        let known = if !v.pass && KNOWN_FAILURES.contains(n) {
            " (known failure)"
        } else {
            ""
        };
        println!("criterion {n:>2}: {status}{known}  {}", v.detail);
        if let Some(msg) = &v.broken {
            println!("    error: {msg}");
            problems.push(format!("criterion {n}: {msg}"));
        }
        if v.pass && KNOWN_FAILURES.contains(n) {
            problems.push(format!(
                "criterion {n} is listed as a known failure but passed"
            ));
        }
        if !v.pass && !KNOWN_FAILURES.contains(n) {
            problems.push(format!("criterion {n} failed"));
        }
    }
    let passed = verdicts.iter().filter(|(_, v)| v.pass).count();
    println!("acceptance: {passed}/{} criteria pass", verdicts.len());
    if !problems.is_empty() {
        for p in &problems {
            eprintln!("{p}");
        }
        std::process::exit(1);
    }
}
