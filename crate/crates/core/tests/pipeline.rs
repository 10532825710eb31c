use prmlab_core::datagen::{generate, GenConfig};
use prmlab_core::eval::{default_grid, first_error_f1, score_dataset, sweep_scored};
use prmlab_core::ingest::{read_dataset, write_dataset};
use prmlab_core::model::{
    load_checkpoint, save_checkpoint, train, FeaturizerConfig, ScorerParameters, TrainConfig,
};
use prmlab_core::{LossMode, Trajectory};

fn small_setup(num_traces: usize) -> (Vec<Trajectory>, ScorerParameters) {
    let data = generate(&GenConfig {
        num_traces,
        ..GenConfig::default()
    })
    .unwrap();
    let feat = FeaturizerConfig {
        dim: 256,
        ..FeaturizerConfig::default()
    };
    (data, ScorerParameters::init(feat, 16, 3).unwrap())
}

fn train_cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        learning_rate: 1e-3,
        ..TrainConfig::default()
    }
}

#[test]
fn dataset_file_round_trip_then_train_and_reload() {
    let dir = tempfile::tempdir().unwrap();
    let (data, init) = small_setup(200);
    let path = dir.path().join("data.jsonl");
    write_dataset(&data, &path).unwrap();
    let reread = read_dataset(&path).unwrap();
    assert_eq!(reread, data);

    let outcome = train(&reread, init, &train_cfg(2)).unwrap();
    let ckpt = dir.path().join("ckpt");
    save_checkpoint(&outcome.params, &ckpt).unwrap();
    let loaded = load_checkpoint(&ckpt).unwrap();
    assert_eq!(loaded.values, outcome.params.values);
    assert_eq!(loaded.step_count, outcome.params.step_count);

    let (a, log_a) = first_error_f1(&data, &outcome.params, 0.5).unwrap();
    let (b, log_b) = first_error_f1(&data, &loaded, 0.5).unwrap();
    assert_eq!(a, b);
    assert_eq!(log_a, log_b);
}

#[test]
fn training_is_bitwise_deterministic() {
    let (data, init) = small_setup(150);
    let a = train(&data, init.clone(), &train_cfg(2)).unwrap();
    let b = train(&data, init, &train_cfg(2)).unwrap();
    assert_eq!(a.params.values, b.params.values);
    assert_eq!(a.trace, b.trace);
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let (data, init) = small_setup(150);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            let out = train(&data, init.clone(), &train_cfg(1)).unwrap();
            let scored = score_dataset(&data, &out.params);
            (
                out.params.values,
                sweep_scored(&scored, &default_grid()).unwrap(),
            )
        })
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn expected_mode_trains_too() {
    let (data, init) = small_setup(100);
    let mut cfg = train_cfg(2);
    cfg.loss.mode = LossMode::Expected;
    let out = train(&data, init, &cfg).unwrap();
    assert_eq!(out.trace.len(), 2);
    assert!(out.trace.iter().all(|s| s.mean_loss.is_finite()));
}

/// Regression anchor on the default seed-7 dataset with the default model.
#[test]
fn loss_decreases_on_default_dataset() {
    let data = generate(&GenConfig::default()).unwrap();
    let params = ScorerParameters::init(FeaturizerConfig::default(), 64, 0).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    let out = train(&data, params, &cfg).unwrap();
    let first = out.trace.first().unwrap().mean_loss;
    let last = out.trace.last().unwrap().mean_loss;
    assert!(last < first, "loss went from {first} to {last}");
}
