use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::models::{init_models_as, LayerSpec};

fn tiny_arch() -> ArchConfig {
    ArchConfig {
        input_height: 8,
        input_width: 8,
        inpainter_widths: vec![2, 3],
        detector_layers: vec![LayerSpec::new(3, 2, 3, 2), LayerSpec::new(2, 1, 1, 1)],
    }
}

fn random_tensor(rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_vec(3, 8, 8, (0..192).map(|_| rng.gen_range(0.05..0.95)).collect())
}

fn batch(seed: u64, n: usize) -> (Vec<Tensor<f64>>, Vec<Tensor<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let real = (0..n).map(|_| random_tensor(&mut rng)).collect();
    let noisy = (0..n).map(|_| random_tensor(&mut rng)).collect();
    (real, noisy)
}

fn assert_close(analytic: &[f64], fd: &[f64]) {
    assert_eq!(analytic.len(), fd.len());
    for (i, (&a, &f)) in analytic.iter().zip(fd).enumerate() {
        let scale = a.abs().max(f.abs());
        assert!((a - f).abs() <= 1e-3 * scale + 1e-9, "param {i}: analytic {a} vs numeric {f}");
    }
}

fn numeric_grad<N: Network<f64>>(net: &mut N, mut loss: impl FnMut(&N) -> f64) -> Vec<f64> {
    let h = 1e-6;
    let mut out = Vec::new();
    let n_arrays = net.parameters().len();
    for a in 0..n_arrays {
        for j in 0..net.parameters()[a].len() {
            let orig = net.parameters()[a][j];
            net.parameters_mut()[a][j] = orig + h;
            let plus = loss(net);
            net.parameters_mut()[a][j] = orig - h;
            let minus = loss(net);
            net.parameters_mut()[a][j] = orig;
            out.push((plus - minus) / (2.0 * h));
        }
    }
    out
}

fn check_detector_gradient(form: LossForm) {
    let (inp, mut det) = init_models_as::<f64>(&tiny_arch(), 3).unwrap();
    let (real, noisy) = batch(11, 3);
    let (_, grads) = detector_batch_grad(&inp, &det, &real, &noisy, form).unwrap();
    let fd = numeric_grad(&mut det, |d| detector_batch_grad(&inp, d, &real, &noisy, form).unwrap().0);
    assert_close(&grads.flat(), &fd);
}

fn check_inpainter_gradient(form: LossForm, recon: f64) {
    let (mut inp, det) = init_models_as::<f64>(&tiny_arch(), 5).unwrap();
    let (real, noisy) = batch(12, 3);
    let (_, grads) = inpainter_batch_grad(&inp, &det, &real, &noisy, form, recon).unwrap();
    let fd = numeric_grad(&mut inp, |i| {
        inpainter_batch_grad(i, &det, &real, &noisy, form, recon).unwrap().0
    });
    assert_close(&grads.flat(), &fd);
}

#[test]
fn detector_gradient_matches_finite_differences() {
    check_detector_gradient(LossForm::Literal);
    check_detector_gradient(LossForm::PerCellBce);
}

#[test]
fn inpainter_gradient_matches_finite_differences() {
    check_inpainter_gradient(LossForm::Literal, 0.0);
    check_inpainter_gradient(LossForm::PerCellBce, 0.0);
    check_inpainter_gradient(LossForm::PerCellBce, 0.5);
}

fn f32_inputs(seed: u64, n: usize) -> Vec<ModelInput> {
    let (real, _) = batch(seed, n);
    real.into_iter()
        .enumerate()
        .map(|(i, t)| ModelInput {
            tensor: t.cast(),
            source_frame_index: i,
        })
        .collect()
}

fn tiny_state(cfg: &TrainConfig) -> TrainState {
    TrainState::init(&tiny_arch(), cfg).unwrap()
}

#[test]
fn train_step_is_deterministic() {
    let cfg = TrainConfig {
        batch_size: 4,
        seed: 7,
        ..Default::default()
    };
    let inputs = f32_inputs(1, 4);
    let mut a = tiny_state(&cfg);
    let mut b = a.clone();
    let la = train_step(&mut a, &inputs, &cfg).unwrap();
    let lb = train_step(&mut b, &inputs, &cfg).unwrap();
    assert_eq!(la, lb);
    assert_eq!(a, b);
    assert_eq!(a.step, 1);
    // Both networks actually moved.
    let fresh = tiny_state(&cfg);
    assert_ne!(a.detector, fresh.detector);
    assert_ne!(a.inpainter, fresh.inpainter);
}

#[test]
fn non_finite_loss_reports_the_step() {
    let cfg = TrainConfig {
        batch_size: 2,
        ..Default::default()
    };
    let mut state = tiny_state(&cfg);
    state.step = 17;
    state.detector.parameters_mut()[0][0] = f32::NAN;
    let before = state.clone();
    match train_step(&mut state, &f32_inputs(2, 2), &cfg) {
        Err(AvidError::Training { step, .. }) => assert_eq!(step, 17),
        other => panic!("expected a training error, got {other:?}"),
    }
    assert_eq!(state.step, 17);
    assert_eq!(state.inpainter, before.inpainter);
}

#[test]
fn zero_gamma_feeds_clean_inputs() {
    let cfg = TrainConfig {
        gamma: 0.0,
        ..Default::default()
    };
    let inputs = f32_inputs(3, 2);
    let noisy = noisy_batch(&inputs, &cfg, 5).unwrap();
    assert_eq!(noisy[0], inputs[0].tensor);
    let cfg = TrainConfig { gamma: 0.4, ..cfg };
    assert_ne!(noisy_batch(&inputs, &cfg, 5).unwrap()[0], inputs[0].tensor);
    assert_ne!(noisy_batch(&inputs, &cfg, 5).unwrap(), noisy_batch(&inputs, &cfg, 6).unwrap());
}

#[test]
fn fit_records_one_entry_per_interval() {
    let cfg = TrainConfig {
        batch_size: 4,
        max_steps: 7,
        eval_interval: 3,
        ..Default::default()
    };
    let train = f32_inputs(4, 9);
    let val = f32_inputs(5, 3);
    let mut lines = Vec::new();
    let out = fit(tiny_state(&cfg), &train, &val, &cfg, |r| lines.push(r.log_line())).unwrap();
    assert_eq!(out.history.len(), 2);
    assert_eq!(out.history.iter().map(|r| r.step).collect::<Vec<_>>(), vec![3, 6]);
    assert_eq!(lines.len(), 2);
    assert_eq!(out.state.step, 7);
    let best_gap = out.history.iter().map(|r| r.metrics.score_gap).fold(f64::MIN, f64::max);
    let best_mse = out.history.iter().map(|r| r.metrics.recon_mse).fold(f64::MAX, f64::min);
    assert_eq!(out.best_detector.metric, best_gap);
    assert_eq!(out.best_inpainter.metric, best_mse);
    assert!(out.history.iter().any(|r| r.step == out.best_detector.step));
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        TrainConfig { learning_rate: 0.0, ..Default::default() },
        TrainConfig { momentum: 1.0, ..Default::default() },
        TrainConfig { batch_size: 0, ..Default::default() },
        TrainConfig { eval_interval: 0, ..Default::default() },
        TrainConfig { gamma: -0.1, ..Default::default() },
        TrainConfig { validation_fraction: 1.0, ..Default::default() },
    ];
    for cfg in bad {
        assert!(matches!(cfg.validate(), Err(AvidError::Config(_))), "{cfg:?}");
    }
    TrainConfig::default().validate().unwrap();
}

#[test]
fn empty_batch_is_an_argument_error() {
    let (inp, det) = init_models_as::<f64>(&tiny_arch(), 0).unwrap();
    let r = detector_batch_grad::<f64>(&inp, &det, &[], &[], LossForm::Literal);
    assert!(matches!(r, Err(AvidError::Argument(_))));
}

proptest! {
    #[test]
    fn each_epoch_visits_distinct_samples(n in 1usize..60, b in 1usize..20, seed in any::<u64>()) {
        let per_epoch = (n / b).max(1) as u64;
        for epoch in 0..2u64 {
            let mut seen = Vec::new();
            for s in epoch * per_epoch..(epoch + 1) * per_epoch {
                let idx = batch_indices(n, b, seed, s);
                prop_assert_eq!(idx.len(), b.min(n));
                seen.extend(idx);
            }
            let mut sorted = seen.clone();
            sorted.sort_unstable();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), seen.len());
            prop_assert!(seen.iter().all(|&i| i < n));
        }
    }

    #[test]
    fn bce_detector_loss_is_non_negative(
        real in proptest::collection::vec(0.001f64..0.999, 4),
        fake in proptest::collection::vec(0.001f64..0.999, 4),
    ) {
        let t = AdversarialTargets::new(2, 2);
        let r = crate::models::ScoreGrid::new(2, 2, real).unwrap();
        let f = crate::models::ScoreGrid::new(2, 2, fake).unwrap();
        prop_assert!(detector_loss(&r, &f, &t, LossForm::PerCellBce).unwrap() >= 0.0);
        // The literal detector loss is bounded below by -2 ln(4 + eps) on a 2x2 grid.
        prop_assert!(detector_loss(&r, &f, &t, LossForm::Literal).unwrap() >= -2.0 * (4.0f64 + LOG_EPS).ln() - 1e-12);
    }
}

#[test]
fn zero_steps_return_the_initial_networks() {
    let cfg = TrainConfig {
        max_steps: 0,
        ..Default::default()
    };
    let start = tiny_state(&cfg);
    let out = fit(start.clone(), &f32_inputs(6, 4), &f32_inputs(7, 2), &cfg, |_| {}).unwrap();
    assert!(out.history.is_empty());
    assert_eq!(out.best_detector.model, start.detector);
    assert_eq!(out.best_inpainter.model, start.inpainter);
    assert_eq!(out.best_inpainter.metric, out.initial.recon_mse);
}

#[test]
fn noiseless_training_stays_finite() {
    let cfg = TrainConfig {
        gamma: 0.0,
        batch_size: 4,
        max_steps: 20,
        eval_interval: 10,
        loss_form: LossForm::Literal,
        ..Default::default()
    };
    let out = fit(tiny_state(&cfg), &f32_inputs(8, 8), &f32_inputs(9, 2), &cfg, |_| {}).unwrap();
    assert_eq!(out.history.len(), 2);
    assert!(out.history.iter().all(|r| r.detector_loss.is_finite() && r.inpainter_loss.is_finite()));
}

#[test]
fn empty_training_set_is_an_argument_error() {
    let cfg = TrainConfig::default();
    let r = fit(tiny_state(&cfg), &[], &f32_inputs(1, 2), &cfg, |_| {});
    assert!(matches!(r, Err(AvidError::Argument(_))));
    let r = fit(tiny_state(&cfg), &f32_inputs(1, 2), &[], &cfg, |_| {});
    assert!(matches!(r, Err(AvidError::Argument(_))));
}
