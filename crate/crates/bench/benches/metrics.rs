use criterion::{criterion_group, criterion_main, Criterion};

use avid_bench::{quick_arch, random_inputs, random_scores};
use avid_core::detection::analyze_all;
use avid_core::evaluation::{alpha_max, roc_from_scores, sweep_rates, Level, Sweep};
use avid_core::models::init_models;
use avid_core::{Frame, Sample, Thresholds};

fn score_roc(c: &mut Criterion) {
    let (scores, labels) = random_scores(10_000, 3);
    c.bench_function("roc_from_scores_10k", |b| b.iter(|| roc_from_scores(&scores, &labels).unwrap()));
}

fn threshold_sweep(c: &mut Criterion) {
    let arch = quick_arch();
    let (inpainter, detector) = init_models(&arch, 0).unwrap();
    let inputs = random_inputs(&arch, 32, 4);
    let analyses = analyze_all(&inputs, &inpainter, &detector).unwrap();
    let samples: Vec<Sample> = (0..inputs.len())
        .map(|i| Sample {
            frame_label: Some(i % 2 == 0),
            ..Sample::still(Frame::filled(140, 140, 0.0, i))
        })
        .collect();
    let entries: Vec<_> = samples.iter().zip(&analyses).collect();
    let sweep = Sweep::standard(alpha_max(&analyses));
    c.bench_function("frame_sweep_32_frames", |b| {
        b.iter(|| sweep_rates(&entries, &sweep, Level::Frame).unwrap())
    });
    let a = &analyses[0];
    c.bench_function("fuse_140", |b| b.iter(|| a.fuse(Thresholds::default()).unwrap()));
}

criterion_group!(benches, score_roc, threshold_sweep);
criterion_main!(benches);
