use criterion::{criterion_group, criterion_main, Criterion};

use avid_bench::{quick_arch, random_inputs};
use avid_core::models::init_models;
use avid_core::training::train_step;
use avid_core::{TrainConfig, TrainState};

fn forward(c: &mut Criterion) {
    let arch = quick_arch();
    let (inpainter, detector) = init_models(&arch, 0).unwrap();
    let x = random_inputs(&arch, 1, 1).remove(0);
    c.bench_function("detector_forward_140", |b| b.iter(|| detector.infer(&x.tensor).unwrap()));
    c.bench_function("inpainter_forward_140", |b| b.iter(|| inpainter.infer(&x.tensor).unwrap()));
}

fn training(c: &mut Criterion) {
    let arch = quick_arch();
    let cfg = TrainConfig {
        batch_size: 8,
        ..Default::default()
    };
    let batch = random_inputs(&arch, 8, 2);
    let state = TrainState::init(&arch, &cfg).unwrap();
    let mut group = c.benchmark_group("training");
    group.sample_size(10);
    group.bench_function("train_step_140_batch8", |b| {
        b.iter_batched(
            || state.clone(),
            |mut s| train_step(&mut s, &batch, &cfg).unwrap(),
            criterion::BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(benches, forward, training);
criterion_main!(benches);
