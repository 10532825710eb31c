use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use prmlab_bench::{dataset, scorer};
use prmlab_core::eval::{default_grid, score_dataset, sweep_scored};
use prmlab_core::model::{
    backward_step, featurize_step, forward, train, FeaturizerConfig, TrainConfig,
};
use prmlab_core::objective::{expected_grad, sample_buffer_factors, LossConfig};
use prmlab_core::{Label, StepProbabilities};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bench_featurize(c: &mut Criterion) {
    let data = dataset(64);
    let cfg = FeaturizerConfig::default();
    c.bench_function("featurize_64_traces", |b| {
        b.iter(|| {
            for t in &data {
                for s in &t.steps {
                    black_box(featurize_step(s, t.len(), &cfg));
                }
            }
        })
    });
}

fn bench_forward_backward(c: &mut Criterion) {
    let data = dataset(1);
    let params = scorer(64);
    let step = &data[0].steps[0];
    let x = featurize_step(step, data[0].len(), &params.featurizer);
    let mut grad = vec![0.0; params.values.len()];
    c.bench_function("forward_h64", |b| {
        b.iter(|| black_box(forward(&x, &params).unwrap()))
    });
    c.bench_function("forward_backward_h64", |b| {
        b.iter(|| {
            let f = forward(&x, &params).unwrap();
            backward_step(&x, &f, Label::Right, true, 3.0, 1.0, &params, &mut grad);
        })
    });
}

fn bench_objective(c: &mut Criterion) {
    let probs = vec![StepProbabilities::new(0.5, 0.2, 0.3).unwrap(); 10];
    let cfg = LossConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    c.bench_function("sample_buffer_factors_10", |b| {
        b.iter(|| black_box(sample_buffer_factors(&probs, &cfg, &mut rng)))
    });
    c.bench_function("expected_grad", |b| {
        b.iter(|| black_box(expected_grad(black_box(&probs[0]), Label::Wrong)))
    });
}

fn bench_train_epoch(c: &mut Criterion) {
    let data = dataset(500);
    let cfg = TrainConfig::default();
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("epoch_500_traces_h64", |b| {
        b.iter_batched(
            || scorer(64),
            |p| train(&data, p, &cfg).unwrap(),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

fn bench_sweep(c: &mut Criterion) {
    let data = dataset(1000);
    let params = scorer(64);
    let scored = score_dataset(&data, &params);
    let grid = default_grid();
    c.bench_function("sweep_1000_traces", |b| {
        b.iter(|| black_box(sweep_scored(&scored, &grid).unwrap()))
    });
}

criterion_group!(
    benches,
    bench_featurize,
    bench_forward_backward,
    bench_objective,
    bench_train_epoch,
    bench_sweep
);
criterion_main!(benches);
