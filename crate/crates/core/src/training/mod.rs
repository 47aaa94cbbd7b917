//! Alternating adversarial optimisation of the detector and the inpainter.
//!
//! One step draws a minibatch of clean inputs, corrupts them with fresh
//! Gaussian noise, updates the detector on (clean, inpainted) pairs and then
//! updates the inpainter against the freshly updated detector.

mod losses;
mod optimizer;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use losses::{
    detector_loss, detector_loss_grad, inpainter_loss, inpainter_loss_grad, AdversarialTargets,
    LossForm, LOG_EPS,
};
pub use optimizer::MomentumSgd;

use crate::data::{derive_seed, inject_noise, ModelInput, NoiseConfig};
use crate::error::{AvidError, Result};
use crate::models::{ArchConfig, DetectorModel, Gradients, InpainterModel, Network};
use crate::tensor::{Real, Tensor};

const NOISE_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub gamma: f64,
    pub sigma: f64,
    pub max_steps: u64,
    pub eval_interval: u64,
    pub seed: u64,
    pub loss_form: LossForm,
    /// Weight of an optional pixel MSE term added to the inpainter loss. Off by default.
    pub recon_weight: f64,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.002,
            momentum: 0.9,
            batch_size: 16,
            gamma: 0.4,
            sigma: 1.0,
            max_steps: 20_000,
            eval_interval: 500,
            seed: 0,
            loss_form: LossForm::PerCellBce,
            recon_weight: 0.0,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AvidError::config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.eval_interval == 0 {
            return bad("eval_interval must be at least 1".into());
        }
        if !(self.recon_weight >= 0.0 && self.recon_weight.is_finite()) {
            return bad(format!("recon_weight must be >= 0, got {}", self.recon_weight));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(format!(
                "validation_fraction must be in (0, 1), got {}",
                self.validation_fraction
            ));
        }
        self.noise(0).validate()
    }

    fn noise(&self, seed: u64) -> NoiseConfig {
        NoiseConfig {
            gamma: self.gamma,
            sigma: self.sigma,
            seed,
        }
    }
}

/// Batch-mean losses of one step. The inpainter loss excludes the optional MSE term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    pub detector: f64,
    pub inpainter: f64,
}

/// Everything needed to continue training deterministically.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub inpainter: InpainterModel,
    pub detector: DetectorModel,
    pub inpainter_opt: MomentumSgd<f32>,
    pub detector_opt: MomentumSgd<f32>,
    pub step: u64,
}

impl TrainState {
    pub fn new(inpainter: InpainterModel, detector: DetectorModel, cfg: &TrainConfig) -> Self {
        let opt = |net: &dyn Network<f32>| {
            let sizes: Vec<usize> = net.parameters().iter().map(|p| p.len()).collect();
            MomentumSgd::new(cfg.learning_rate as f32, cfg.momentum as f32, &sizes)
        };
        Self {
            inpainter_opt: opt(&inpainter),
            detector_opt: opt(&detector),
            inpainter,
            detector,
            step: 0,
        }
    }

    pub fn init(arch: &ArchConfig, cfg: &TrainConfig) -> Result<Self> {
        let (inp, det) = crate::models::init_models(arch, cfg.seed)?;
        Ok(Self::new(inp, det, cfg))
    }
}

fn targets_for<T: Real>(det: &DetectorModel<T>) -> AdversarialTargets {
    let (r, c) = det.output_grid();
    AdversarialTargets::new(r, c)
}

fn check_batch<T: Real>(real: &[Tensor<T>], noisy: &[Tensor<T>]) -> Result<()> {
    if real.is_empty() || real.len() != noisy.len() {
        return Err(AvidError::argument(format!(
            "batch needs matching non-empty clean/noisy lists, got {} and {}",
            real.len(),
            noisy.len()
        )));
    }
    Ok(())
}

/// Sums per-sample results in input order so the reduction is independent of scheduling.
fn reduce<T: Real>(parts: Vec<Result<(T, Gradients<T>)>>) -> Result<(T, Gradients<T>)> {
    let n = T::lit(parts.len() as f64);
    let mut iter = parts.into_iter();
    let (mut loss, mut grads) = iter.next().expect("non-empty batch")?;
    for part in iter {
        let (l, g) = part?;
        loss += l;
        grads.add(&g);
    }
    grads.scale(T::one() / n);
    Ok((loss / n, grads))
}

/// Batch-mean detector loss and its parameter gradient.
pub fn detector_batch_grad<T: Real>(
    inpainter: &InpainterModel<T>,
    detector: &DetectorModel<T>,
    real: &[Tensor<T>],
    noisy: &[Tensor<T>],
    form: LossForm,
) -> Result<(T, Gradients<T>)> {
    check_batch(real, noisy)?;
    let targets = targets_for(detector);
    let parts = real
        .par_iter()
        .zip(noisy.par_iter())
        .map(|(x, xn)| {
            let fake = inpainter.infer(xn)?;
            let (o_r, cache_r) = detector.forward(x)?;
            let (o_f, cache_f) = detector.forward(&fake)?;
            let (loss, g_r, g_f) = detector_loss_grad(&o_r, &o_f, &targets, form)?;
            let (mut grads, _) = detector.backward(&cache_r, &g_r, false);
            grads.add(&detector.backward(&cache_f, &g_f, false).0);
            Ok((loss, grads))
        })
        .collect();
    reduce(parts)
}

/// Batch-mean inpainter loss (plus `recon_weight * MSE`) and its parameter gradient.
pub fn inpainter_batch_grad<T: Real>(
    inpainter: &InpainterModel<T>,
    detector: &DetectorModel<T>,
    real: &[Tensor<T>],
    noisy: &[Tensor<T>],
    form: LossForm,
    recon_weight: f64,
) -> Result<(T, Gradients<T>)> {
    check_batch(real, noisy)?;
    let targets = targets_for(detector);
    let w = T::lit(recon_weight);
    let parts = real
        .par_iter()
        .zip(noisy.par_iter())
        .map(|(x, xn)| {
            let (fake, i_cache) = inpainter.forward(xn)?;
            let (o_f, d_cache) = detector.forward(&fake)?;
            let (mut loss, g) = inpainter_loss_grad(&o_f, &targets, form)?;
            let (_, d_fake) = detector.backward(&d_cache, &g, true);
            let mut d_fake = d_fake.expect("input grad requested");
            if recon_weight > 0.0 {
                let n = T::lit(fake.data().len() as f64);
                let mut mse = T::zero();
                for ((d, &f), &t) in d_fake.data_mut().iter_mut().zip(fake.data()).zip(x.data()) {
                    mse += (f - t) * (f - t);
                    *d += T::lit(2.0) * w * (f - t) / n;
                }
                loss += w * mse / n;
            }
            let (grads, _) = inpainter.backward(&i_cache, &d_fake, false);
            Ok((loss, grads))
        })
        .collect();
    reduce(parts)
}

/// Noisy copies of a batch, seeded by `(seed, step, position)`.
pub fn noisy_batch(batch: &[ModelInput], cfg: &TrainConfig, step: u64) -> Result<Vec<Tensor<f32>>> {
    batch
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let seed = derive_seed(cfg.seed, &[NOISE_STREAM, step, k as u64]);
            Ok(inject_noise(x, &cfg.noise(seed))?.tensor)
        })
        .collect()
}

fn finite_or_fail(step: u64, what: &str, loss: f32, grads: &Gradients<f32>) -> Result<()> {
    if !loss.is_finite() || !grads.is_finite() {
        return Err(AvidError::Training {
            step,
            message: format!("{what} loss or gradient is not finite (loss = {loss})"),
        });
    }
    Ok(())
}

/// One detector update followed by one inpainter update.
///
/// Fails without touching either network if the detector loss or gradient
/// is non-finite; an inpainter failure leaves the detector update applied.
pub fn train_step(state: &mut TrainState, batch: &[ModelInput], cfg: &TrainConfig) -> Result<StepLosses> {
    let step = state.step;
    let real: Vec<Tensor<f32>> = batch.iter().map(|x| x.tensor.clone()).collect();
    let noisy = noisy_batch(batch, cfg, step)?;

    let (ld, gd) = detector_batch_grad(&state.inpainter, &state.detector, &real, &noisy, cfg.loss_form)?;
    finite_or_fail(step, "detector", ld, &gd)?;
    state.detector_opt.step(state.detector.parameters_mut(), &gd.arrays);

    let (li, gi) = inpainter_batch_grad(
        &state.inpainter,
        &state.detector,
        &real,
        &noisy,
        cfg.loss_form,
        cfg.recon_weight,
    )?;
    finite_or_fail(step, "inpainter", li, &gi)?;
    state.inpainter_opt.step(state.inpainter.parameters_mut(), &gi.arrays);

    state.step += 1;
    Ok(StepLosses {
        detector: ld as f64,
        inpainter: li as f64,
    })
}

/// Sample indices of the minibatch used at `step`.
///
/// Each epoch is a fresh permutation; a trailing partial batch is dropped
/// unless the whole set is smaller than one batch.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64, step: u64) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let per_epoch = (n / batch_size).max(1) as u64;
    let (epoch, pos) = (step / per_epoch, (step % per_epoch) as usize);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[SHUFFLE_STREAM, epoch])));
    let start = pos * batch_size;
    perm[start..(start + batch_size).min(n)].to_vec()
}

/// Held-out quality of a pair of networks on clean inputs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationMetrics {
    /// Mean detector score on clean inputs minus mean score on their inpaintings.
    pub score_gap: f64,
    /// Mean per-pixel squared error of the inpainting.
    pub recon_mse: f64,
}

pub fn validation_metrics(
    inpainter: &InpainterModel,
    detector: &DetectorModel,
    inputs: &[ModelInput],
) -> Result<ValidationMetrics> {
    if inputs.is_empty() {
        return Err(AvidError::argument("validation set is empty"));
    }
    let per: Vec<Result<(f64, f64)>> = inputs
        .par_iter()
        .map(|x| {
            let fake = inpainter.infer(&x.tensor)?;
            let mean = |g: &crate::models::ScoreGrid| g.values().iter().map(|&v| v as f64).sum::<f64>() / g.len() as f64;
            let gap = mean(&detector.infer(&x.tensor)?) - mean(&detector.infer(&fake)?);
            let mse = fake
                .data()
                .iter()
                .zip(x.tensor.data())
                .map(|(&a, &b)| ((a - b) as f64).powi(2))
                .sum::<f64>()
                / fake.data().len() as f64;
            Ok((gap, mse))
        })
        .collect();
    let (mut gap, mut mse) = (0.0, 0.0);
    for p in per {
        let (g, m) = p?;
        gap += g;
        mse += m;
    }
    let n = inputs.len() as f64;
    Ok(ValidationMetrics {
        score_gap: gap / n,
        recon_mse: mse / n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: u64,
    /// Mean training losses since the previous record.
    pub detector_loss: f64,
    pub inpainter_loss: f64,
    pub metrics: ValidationMetrics,
}

impl EvalRecord {
    pub fn log_line(&self) -> String {
        format!(
            "step {:>6}  loss_d {:.5}  loss_i {:.5}  val_gap {:.5}  val_mse {:.6}",
            self.step, self.detector_loss, self.inpainter_loss, self.metrics.score_gap, self.metrics.recon_mse
        )
    }
}

/// A network snapshot and the step/metric at which it was taken.
#[derive(Clone, Debug, PartialEq)]
pub struct Best<M> {
    pub model: M,
    pub step: u64,
    pub metric: f64,
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub initial: ValidationMetrics,
    /// One record every `eval_interval` steps.
    pub history: Vec<EvalRecord>,
    /// Detector with the largest validation score gap.
    pub best_detector: Best<DetectorModel>,
    /// Inpainter with the smallest validation reconstruction error.
    pub best_inpainter: Best<InpainterModel>,
    pub state: TrainState,
}

/// Trains for `cfg.max_steps` steps, evaluating every `cfg.eval_interval`.
///
/// The two networks are checkpointed independently, each at its own best
/// validation metric; ties keep the earlier snapshot.
pub fn fit(
    mut state: TrainState,
    train: &[ModelInput],
    validation: &[ModelInput],
    cfg: &TrainConfig,
    mut on_eval: impl FnMut(&EvalRecord),
) -> Result<FitOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(AvidError::argument("training set is empty"));
    }
    let initial = validation_metrics(&state.inpainter, &state.detector, validation)?;
    let mut history = Vec::new();
    let mut best_detector: Option<Best<DetectorModel>> = None;
    let mut best_inpainter: Option<Best<InpainterModel>> = None;
    let (mut sum_d, mut sum_i, mut count) = (0.0, 0.0, 0u64);
    while state.step < cfg.max_steps {
        let idx = batch_indices(train.len(), cfg.batch_size, cfg.seed, state.step);
        let batch: Vec<ModelInput> = idx.iter().map(|&i| train[i].clone()).collect();
        let losses = train_step(&mut state, &batch, cfg)?;
        sum_d += losses.detector;
        sum_i += losses.inpainter;
        count += 1;
        if state.step % cfg.eval_interval == 0 {
            let metrics = validation_metrics(&state.inpainter, &state.detector, validation)?;
            if !(metrics.score_gap.is_finite() && metrics.recon_mse.is_finite()) {
                return Err(AvidError::Training {
                    step: state.step,
                    message: "validation metrics are not finite".into(),
                });
            }
            let record = EvalRecord {
                step: state.step,
                detector_loss: sum_d / count as f64,
                inpainter_loss: sum_i / count as f64,
                metrics,
            };
            (sum_d, sum_i, count) = (0.0, 0.0, 0);
            if best_detector.as_ref().map_or(true, |b| metrics.score_gap > b.metric) {
                best_detector = Some(Best {
                    model: state.detector.clone(),
                    step: state.step,
                    metric: metrics.score_gap,
                });
            }
            if best_inpainter.as_ref().map_or(true, |b| metrics.recon_mse < b.metric) {
                best_inpainter = Some(Best {
                    model: state.inpainter.clone(),
                    step: state.step,
                    metric: metrics.recon_mse,
                });
            }
            on_eval(&record);
            history.push(record);
        }
    }
    // No evaluation point yet: fall back to the current networks.
    let final_metrics = || validation_metrics(&state.inpainter, &state.detector, validation);
    let best_detector = match best_detector {
        Some(b) => b,
        None => Best {
            model: state.detector.clone(),
            step: state.step,
            metric: final_metrics()?.score_gap,
        },
    };
    let best_inpainter = match best_inpainter {
        Some(b) => b,
        None => Best {
            model: state.inpainter.clone(),
            step: state.step,
            metric: final_metrics()?.recon_mse,
        },
    };
    Ok(FitOutcome {
        initial,
        history,
        best_detector,
        best_inpainter,
        state,
    })
}

#[cfg(test)]
mod tests;
