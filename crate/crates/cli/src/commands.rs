//! Subcommand implementations.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use avid_core::data::clip::{walking_texture_clip, ClipConfig};
use avid_core::data::digits::DigitSource;
use avid_core::data::{derive_seed, generate_ir_mnist, load_dataset, write_dataset, Layout};
use avid_core::detection::FrameAnalysis;
use avid_core::evaluation::{
    alpha_max, analyze_dataset, frame_score_roc, roc_from_analyses, roc_from_scores, EvalCurve, Level, Sweep,
};
use avid_core::models::{ArchConfig, Network};
use avid_core::training::{fit, EvalRecord, TrainState};
use avid_core::{AvidError, Checkpoint, Dataset, DetectorModel, InpainterModel, Sample, Split, Thresholds};

use crate::config::{DataKind, RunConfig};
use crate::{render, CliError};

pub const INPAINTER_BEST: &str = "inpainter_best.ckpt";
pub const DETECTOR_BEST: &str = "detector_best.ckpt";
pub const LAST: &str = "last.ckpt";
pub const TRAIN_LOG: &str = "train.log";
pub const CONFIG_ECHO: &str = "config.txt";
pub const METRICS: &str = "metrics.txt";
pub const ROC_CSV: &str = "roc.csv";
pub const ROC_PNG: &str = "roc.png";
pub const SCORES_CSV: &str = "scores.csv";

/// Seed stream of the procedural digit pool.
const DIGIT_STREAM: u64 = 3;
/// Seed stream of the test clip.
const TEST_CLIP_STREAM: u64 = 4;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(AvidError::io(path, e).to_string())
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("an output directory is required (--out)".into()))?;
    fs::create_dir_all(&out).map_err(io_err(&out))?;
    Ok(out)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}

pub fn gen_data(cfg: &RunConfig) -> Result<(), CliError> {
    let out = out_dir(cfg)?;
    match cfg.kind {
        DataKind::IrMnist => {
            cfg.ir_mnist.validate()?;
            let source = match &cfg.mnist_dir {
                Some(dir) => DigitSource::from_mnist_dir(dir)?,
                None => {
                    if cfg.digits_per_class == 0 {
                        return Err(CliError::Usage("digits_per_class must be positive".into()));
                    }
                    DigitSource::synthetic(cfg.digits_per_class, derive_seed(cfg.seed, &[DIGIT_STREAM]))
                }
            };
            let (train, test) = generate_ir_mnist(&source, &cfg.ir_mnist)?;
            write_dataset(&train, &out)?;
            write_dataset(&test, &out)?;
            println!("wrote {} train and {} test composites to {}", train.len(), test.len(), out.display());
        }
        DataKind::WalkingClip => {
            let c = &cfg.clip;
            if c.frames < 10 || c.height == 0 || c.width == 0 {
                return Err(CliError::Usage("clips need at least 10 frames and a positive size".into()));
            }
            let train = walking_texture_clip(&ClipConfig { anomaly: None, ..c.clone() }, "clip_000");
            let test_cfg = ClipConfig {
                anomaly: Some(anomaly_window(c.frames)),
                seed: derive_seed(c.seed, &[TEST_CLIP_STREAM]),
                ..c.clone()
            };
            let test = walking_texture_clip(&test_cfg, "clip_000");
            write_dataset(&train, &out.join(Split::Train.dir_name()))?;
            write_dataset(&test, &out.join(Split::Test.dir_name()))?;
            println!("wrote train and test clips of {} frames to {}", c.frames, out.display());
        }
    }
    Ok(())
}

/// Middle 30% of the clip.
pub fn anomaly_window(frames: usize) -> (usize, usize) {
    (frames * 2 / 5, frames * 7 / 10)
}

fn load_split(cfg: &RunConfig, split: Split, stride: usize) -> Result<Dataset, CliError> {
    let root = cfg
        .data
        .clone()
        .ok_or_else(|| CliError::Usage("a dataset root is required (--data)".into()))?;
    if !root.is_dir() {
        return Err(CliError::Runtime(format!("dataset root {} is not a directory", root.display())));
    }
    let mut dataset = match cfg.layout {
        Layout::IrMnist => load_dataset(&root, Layout::IrMnist, split)?,
        Layout::FrameDirectory => {
            let nested = root.join(split.dir_name());
            let dir = if nested.is_dir() { nested } else { root };
            load_dataset(&dir, Layout::FrameDirectory, split)?
        }
    };
    dataset.pad_to_multiple(stride);
    Ok(dataset)
}

fn frame_dims(dataset: &Dataset) -> Result<(usize, usize), CliError> {
    let first = dataset
        .samples
        .first()
        .ok_or_else(|| CliError::Runtime("dataset is empty".into()))?
        .frame
        .dims();
    if dataset.samples.iter().any(|s| s.frame.dims() != first) {
        return Err(CliError::Runtime("frames of a dataset must share one size".into()));
    }
    Ok(first)
}

fn arch_for(cfg: &RunConfig, dataset: &Dataset) -> Result<ArchConfig, CliError> {
    let (h, w) = frame_dims(dataset)?;
    let arch = ArchConfig {
        input_height: h,
        input_width: w,
        inpainter_widths: cfg.inpainter_widths.clone(),
        detector_layers: cfg.detector_layers.clone(),
    };
    arch.validate()?;
    Ok(arch)
}

fn net_arrays<N: Network<f32>>(net: &N) -> (Vec<(String, Vec<usize>)>, Vec<Vec<f32>>) {
    (net.parameter_shapes(), net.parameters().iter().map(|p| p.to_vec()).collect())
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.train.validate()?;
    let stride: usize = cfg.detector_layers.iter().map(|l| l.stride).product();
    let dataset = load_split(cfg, Split::Train, stride.max(1))?;
    let arch = arch_for(cfg, &dataset)?;
    let out = out_dir(cfg)?;
    let echo = cfg.to_text();
    write_text(&out.join(CONFIG_ECHO), &echo)?;
    print!("{echo}");

    // Hold out the tail of the scorable inputs; all of them are normal.
    let mut inputs: Vec<_> = dataset.model_inputs()?.into_iter().map(|(_, x)| x).collect();
    if inputs.len() < 2 {
        return Err(CliError::Usage("training needs at least two usable frames".into()));
    }
    let n_val = ((inputs.len() as f64 * cfg.train.validation_fraction).round() as usize).clamp(1, inputs.len() - 1);
    let validation = inputs.split_off(inputs.len() - n_val);

    let state = TrainState::init(&arch, &cfg.train)?;
    let mut log = String::new();
    let outcome = fit(state, &inputs, &validation, &cfg.train, |r: &EvalRecord| {
        let line = r.log_line();
        println!("{line}");
        let _ = writeln!(log, "{line}");
    })?;
    write_text(&out.join(TRAIN_LOG), &log)?;

    let rng = |step| avid_core::models::RngState {
        seed: cfg.train.seed,
        stream: step,
    };
    let best_d = &outcome.best_detector;
    Checkpoint::new(&arch, best_d.step, rng(best_d.step))
        .with_detector(&best_d.model)
        .with_metric("score_gap", best_d.metric)
        .save(&out.join(DETECTOR_BEST))?;
    let best_i = &outcome.best_inpainter;
    Checkpoint::new(&arch, best_i.step, rng(best_i.step))
        .with_inpainter(&best_i.model)
        .with_metric("recon_mse", best_i.metric)
        .save(&out.join(INPAINTER_BEST))?;

    let s = &outcome.state;
    let (i_shapes, _) = net_arrays(&s.inpainter);
    let (d_shapes, _) = net_arrays(&s.detector);
    Checkpoint::new(&arch, s.step, rng(s.step))
        .with_inpainter(&s.inpainter)
        .with_detector(&s.detector)
        .with_arrays("inpainter_velocity", &i_shapes, &s.inpainter_opt.velocities)
        .with_arrays("detector_velocity", &d_shapes, &s.detector_opt.velocities)
        .save(&out.join(LAST))?;
    println!(
        "best detector at step {} (gap {:.5}), best inpainter at step {} (mse {:.6})",
        best_d.step, best_d.metric, best_i.step, best_i.metric
    );
    Ok(())
}

struct Trained {
    arch: ArchConfig,
    inpainter: InpainterModel,
    detector: DetectorModel,
}

fn load_networks(cfg: &RunConfig) -> Result<Trained, CliError> {
    let dir = cfg
        .checkpoints
        .clone()
        .ok_or_else(|| CliError::Usage("a checkpoint directory is required (--checkpoints)".into()))?;
    let load = |name: &str| -> Result<Checkpoint, CliError> {
        let path = dir.join(name);
        if !path.is_file() {
            return Err(CliError::Runtime(format!("checkpoint {} not found", path.display())));
        }
        Ok(Checkpoint::load(&path)?)
    };
    let inp = load(INPAINTER_BEST)?;
    let det = load(DETECTOR_BEST)?;
    if inp.arch != det.arch {
        return Err(CliError::Runtime("inpainter and detector checkpoints disagree on the architecture".into()));
    }
    Ok(Trained {
        inpainter: inp.inpainter()?,
        detector: det.detector()?,
        arch: inp.arch,
    })
}

fn load_for(cfg: &RunConfig, nets: &Trained) -> Result<Dataset, CliError> {
    let dataset = load_split(cfg, cfg.split, nets.arch.total_stride())?;
    let dims = frame_dims(&dataset)?;
    if dims != nets.arch.input_size() {
        return Err(CliError::Usage(format!(
            "frames are {}x{} after padding but the checkpoints expect {}x{}",
            dims.0,
            dims.1,
            nets.arch.input_height,
            nets.arch.input_width
        )));
    }
    Ok(dataset)
}

fn stem(sample: &Sample) -> String {
    match &sample.clip {
        Some(clip) => format!("{clip}_{:05}", sample.frame.index),
        None => format!("IMG_{:05}", sample.frame.index),
    }
}

pub fn infer(cfg: &RunConfig) -> Result<(), CliError> {
    let thresholds = Thresholds::new(cfg.thresholds.alpha, cfg.thresholds.zeta)?;
    let nets = load_networks(cfg)?;
    let dataset = load_for(cfg, &nets)?;
    let out = out_dir(cfg)?;
    let analysed = analyze_dataset(&dataset, &nets.inpainter, &nets.detector)?;
    for sub in ["masks", "residuals", "scores"] {
        let dir = out.join(sub);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    let clips = dataset.layout == Layout::FrameDirectory;
    let mut csv = String::from(if clips { "clip,frame_index,frame_score\n" } else { "frame_index,frame_score\n" });
    let mut flagged = 0;
    for (sample, analysis) in &analysed {
        let name = format!("{}.png", stem(sample));
        let fusion = analysis.fuse(thresholds)?;
        if !fusion.mask.pixels.is_empty() {
            flagged += 1;
        }
        render::write_mask(&out.join("masks").join(&name), &fusion.mask.pixels)?;
        render::write_residual(&out.join("residuals").join(&name), analysis)?;
        render::write_score_map(&out.join("scores").join(&name), analysis)?;
        let score = analysis.frame_score()?;
        match &sample.clip {
            Some(clip) if clips => writeln!(csv, "{clip},{},{score:.6}", sample.frame.index),
            _ => writeln!(csv, "{},{score:.6}", sample.frame.index),
        }
        .expect("writing to a string");
    }
    write_text(&out.join(SCORES_CSV), &csv)?;
    println!("{} of {} frames flagged at alpha {} zeta {}", flagged, analysed.len(), thresholds.alpha, thresholds.zeta);
    Ok(())
}

/// One reported curve.
pub struct LevelResult {
    pub level: String,
    pub curve: EvalCurve,
    pub sweep_points: usize,
}

fn metrics_text(results: &[LevelResult]) -> String {
    let mut s = String::from("level,eer,auc,sweep_points\n");
    for r in results {
        let _ = writeln!(s, "{},{:.6},{:.6},{}", r.level, r.curve.eer, r.curve.auc, r.sweep_points);
    }
    s
}

fn roc_text(results: &[LevelResult]) -> String {
    let mut s = String::from("level,alpha,zeta,fpr,tpr\n");
    for r in results {
        for p in &r.curve.points {
            let (a, z) = match p.thresholds {
                Some(t) => (format!("{:.6}", t.alpha), format!("{:.6}", t.zeta)),
                None => (String::new(), String::new()),
            };
            let _ = writeln!(s, "{},{a},{z},{:.6},{:.6}", r.level, p.fpr, p.tpr);
        }
    }
    s
}

fn write_reports(out: &Path, results: &[LevelResult]) -> Result<(), CliError> {
    let metrics = metrics_text(results);
    write_text(&out.join(METRICS), &metrics)?;
    write_text(&out.join(ROC_CSV), &roc_text(results))?;
    let curves: Vec<&EvalCurve> = results.iter().map(|r| &r.curve).collect();
    render::write_roc(&out.join(ROC_PNG), &curves)?;
    print!("{metrics}");
    Ok(())
}

/// Every level the dataset has ground truth for, plus the frame-score ranking.
pub fn evaluate(entries: &[(&Sample, &FrameAnalysis)]) -> Result<Vec<LevelResult>, CliError> {
    let sweep = Sweep::standard(alpha_max(entries.iter().map(|(_, a)| *a)));
    let has_pixels = entries.iter().any(|(s, _)| s.pixel_mask.as_ref().is_some_and(|m| !m.is_empty()));
    let has_tiles = entries.iter().all(|(s, _)| s.tile_labels.is_some());
    let mut results = Vec::new();
    for level in Level::ALL {
        let applicable = match level {
            Level::Frame => true,
            Level::Pixel => has_pixels,
            Level::Region => has_tiles,
        };
        if applicable {
            results.push(LevelResult {
                level: level.name().to_string(),
                curve: roc_from_analyses(entries, &sweep, level)?,
                sweep_points: sweep.len(),
            });
        }
    }
    results.push(LevelResult {
        level: "frame_score".to_string(),
        curve: frame_score_roc(entries)?,
        sweep_points: entries.len(),
    });
    Ok(results)
}

pub fn eval(cfg: &RunConfig) -> Result<(), CliError> {
    let nets = load_networks(cfg)?;
    let dataset = load_for(cfg, &nets)?;
    let out = out_dir(cfg)?;
    let analysed = analyze_dataset(&dataset, &nets.inpainter, &nets.detector)?;
    let entries: Vec<(&Sample, &FrameAnalysis)> = analysed.iter().map(|(s, a)| (*s, a)).collect();
    let results = evaluate(&entries)?;
    write_reports(&out, &results)
}

/// Reads a `score,label` CSV (label 0/1 or false/true).
pub fn read_scores(path: &Path) -> Result<(Vec<f64>, Vec<bool>), CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    let (mut scores, mut labels) = (Vec::new(), Vec::new());
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| CliError::Usage(format!("{} line {line}: {e}", path.display())))?;
        let bad = |what: &str| CliError::Usage(format!("{} line {line}: bad {what}", path.display()));
        let score: f64 = rec.get(0).and_then(|v| v.parse().ok()).ok_or_else(|| bad("score"))?;
        let label = match rec.get(1) {
            Some("1") | Some("true") => true,
            Some("0") | Some("false") => false,
            _ => return Err(bad("label")),
        };
        scores.push(score);
        labels.push(label);
    }
    Ok((scores, labels))
}

pub fn eval_scores(cfg: &RunConfig, path: &Path) -> Result<(), CliError> {
    let (scores, labels) = read_scores(path)?;
    let curve = roc_from_scores(&scores, &labels)?;
    let out = out_dir(cfg)?;
    write_reports(
        &out,
        &[LevelResult {
            level: "scores".to_string(),
            curve,
            sweep_points: scores.len(),
        }],
    )
}
