//! Frame-, pixel- and region-level ROC protocols over a two-threshold sweep.

mod curve;

use std::str::FromStr;

pub use curve::{auc_of, eer_of, roc_from_scores, CurvePoint, EvalCurve};

use crate::data::{Dataset, Sample};
use crate::detection::{analyze_all, FrameAnalysis, IrregularityMask, Thresholds};
use crate::error::{AvidError, Result};
use crate::mask::BinaryMask;
use crate::models::{DetectorModel, InpainterModel};

/// Fraction of ground-truth pixels a mask must cover to count as a hit.
pub const PIXEL_OVERLAP: f64 = 0.40;

/// Number of points on the coupled threshold path.
pub const COUPLED_POINTS: usize = 101;
/// Steps per axis of the threshold grid (21 values each).
pub const GRID_STEPS: usize = 20;
/// Zeta must stay strictly inside (0, 1). The margin is below the f32 sigmoid
/// clamp, so the grid's end columns still include or exclude every score.
pub const ZETA_MARGIN: f64 = 1e-9;

/// A frame is irregular if any pixel is flagged.
pub fn frame_level_label(mask: &IrregularityMask) -> bool {
    !mask.pixels.is_empty()
}

/// True iff `mask` covers at least 40% of a non-empty `gt`; false for empty `gt`.
pub fn pixel_level_match(mask: &BinaryMask, gt: &BinaryMask) -> Result<bool> {
    let overlap = mask.overlap(gt)?;
    Ok(covers(overlap, gt.count()))
}

// Integer form of overlap / gt >= 0.4, exact at the boundary.
fn covers(overlap: usize, gt: usize) -> bool {
    gt > 0 && 5 * overlap >= 2 * gt
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    Frame,
    Pixel,
    Region,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Frame, Level::Pixel, Level::Region];

    pub fn name(&self) -> &'static str {
        match self {
            Level::Frame => "frame",
            Level::Pixel => "pixel",
            Level::Region => "region",
        }
    }
}

impl FromStr for Level {
    type Err = AvidError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frame" => Ok(Level::Frame),
            "pixel" => Ok(Level::Pixel),
            "region" => Ok(Level::Region),
            other => Err(AvidError::config(format!("unknown evaluation level '{other}'"))),
        }
    }
}

/// The (alpha, zeta) pairs a ROC is built from.
#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub points: Vec<Thresholds>,
}

impl Sweep {
    /// Coupled path `zeta = q, alpha = q * alpha_max` at `q = (k + 1) / 102`,
    /// followed by a 21 x 21 grid over `[0, alpha_max] x [0, 1]`.
    pub fn standard(alpha_max: f64) -> Self {
        let mut points = Vec::with_capacity(COUPLED_POINTS + (GRID_STEPS + 1).pow(2));
        for k in 0..COUPLED_POINTS {
            let q = (k + 1) as f64 / (COUPLED_POINTS + 1) as f64;
            points.push(Thresholds {
                alpha: q * alpha_max,
                zeta: q,
            });
        }
        for j in 0..=GRID_STEPS {
            for k in 0..=GRID_STEPS {
                let zeta = (k as f64 / GRID_STEPS as f64).clamp(ZETA_MARGIN, 1.0 - ZETA_MARGIN);
                points.push(Thresholds {
                    alpha: alpha_max * j as f64 / GRID_STEPS as f64,
                    zeta,
                });
            }
        }
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Largest per-pixel residual over a set of analysed frames.
pub fn alpha_max<'a>(analyses: impl IntoIterator<Item = &'a FrameAnalysis>) -> f64 {
    analyses.into_iter().map(|a| a.residual.max() as f64).fold(0.0, f64::max)
}

fn block_fires(block: (f32, f32), t: &Thresholds) -> bool {
    block.1 as f64 <= t.zeta && block.0 as f64 >= t.alpha
}

fn rate(hits: usize, total: usize) -> f64 {
    hits as f64 / total as f64
}

fn need_both(pos: usize, neg: usize, what: &str) -> Result<()> {
    if pos == 0 || neg == 0 {
        return Err(AvidError::argument(format!(
            "{what} ROC needs positive and negative ground truth, got {pos} and {neg}"
        )));
    }
    Ok(())
}

fn frame_label(sample: &Sample) -> Result<bool> {
    sample
        .frame_label
        .ok_or_else(|| AvidError::argument("sample has no frame label"))
}

/// Per-sweep-point `(fpr, tpr)` at the requested level.
///
/// Frame level: a frame is flagged when its fused mask is non-empty. Pixel
/// level: an irregular frame counts only if the mask covers 40% of its
/// ground truth; false positives are flagged normal frames. Region level:
/// each block is a sample, flagged when its score passes `zeta` and some
/// residual in it passes `alpha`.
pub fn sweep_rates(entries: &[(&Sample, &FrameAnalysis)], sweep: &Sweep, level: Level) -> Result<Vec<CurvePoint>> {
    let blocks: Vec<Vec<(f32, f32)>> = entries.iter().map(|(_, a)| a.blocks()).collect::<Result<_>>()?;
    let flagged = |i: usize, t: &Thresholds| blocks[i].iter().any(|&b| block_fires(b, t));
    let point = |fpr, tpr, t: &Thresholds| CurvePoint {
        fpr,
        tpr,
        thresholds: Some(*t),
        cut: None,
    };
    match level {
        Level::Frame => {
            let labels: Vec<bool> = entries.iter().map(|(s, _)| frame_label(s)).collect::<Result<_>>()?;
            let pos = labels.iter().filter(|&&l| l).count();
            need_both(pos, labels.len() - pos, "frame-level")?;
            Ok(sweep
                .points
                .iter()
                .map(|t| {
                    let (mut tp, mut fp) = (0, 0);
                    for (i, &l) in labels.iter().enumerate() {
                        if flagged(i, t) {
                            if l {
                                tp += 1;
                            } else {
                                fp += 1;
                            }
                        }
                    }
                    point(rate(fp, labels.len() - pos), rate(tp, pos), t)
                })
                .collect())
        }
        Level::Pixel => {
            // For each irregular frame: (residual, block score) of every ground-truth pixel.
            let mut positives: Vec<Vec<(f32, f32)>> = Vec::new();
            let mut negatives: Vec<usize> = Vec::new();
            for (i, (s, a)) in entries.iter().enumerate() {
                if !frame_label(s)? {
                    negatives.push(i);
                    continue;
                }
                let gt = s
                    .pixel_mask
                    .as_ref()
                    .filter(|m| !m.is_empty())
                    .ok_or_else(|| AvidError::argument("irregular frame has no pixel ground truth"))?;
                if gt.dims() != (a.residual.height, a.residual.width) {
                    return Err(AvidError::argument("ground-truth mask does not match the frame size"));
                }
                let mut px = Vec::with_capacity(gt.count());
                for y in 0..gt.height() {
                    for x in 0..gt.width() {
                        if gt.get(y, x) {
                            px.push((a.residual.get(y, x), a.scores.values()[a.grid.block_of(y, x)]));
                        }
                    }
                }
                positives.push(px);
            }
            need_both(positives.len(), negatives.len(), "pixel-level")?;
            Ok(sweep
                .points
                .iter()
                .map(|t| {
                    let tp = positives
                        .iter()
                        .filter(|px| covers(px.iter().filter(|&&b| block_fires(b, t)).count(), px.len()))
                        .count();
                    let fp = negatives.iter().filter(|&&i| flagged(i, t)).count();
                    point(rate(fp, negatives.len()), rate(tp, positives.len()), t)
                })
                .collect())
        }
        Level::Region => {
            let mut labelled: Vec<(bool, (f32, f32))> = Vec::new();
            for ((s, a), b) in entries.iter().zip(&blocks) {
                let tiles = s
                    .tile_labels
                    .as_ref()
                    .ok_or_else(|| AvidError::argument("sample has no tile labels"))?;
                if (tiles.rows, tiles.cols) != (a.grid.rows, a.grid.cols) {
                    return Err(AvidError::argument(format!(
                        "tile labels are {}x{}, detector grid is {}x{}",
                        tiles.rows, tiles.cols, a.grid.rows, a.grid.cols
                    )));
                }
                labelled.extend(tiles.irregular.iter().copied().zip(b.iter().copied()));
            }
            let pos = labelled.iter().filter(|(l, _)| *l).count();
            need_both(pos, labelled.len() - pos, "region-level")?;
            Ok(sweep
                .points
                .iter()
                .map(|t| {
                    let (mut tp, mut fp) = (0, 0);
                    for &(l, b) in &labelled {
                        if block_fires(b, t) {
                            if l {
                                tp += 1;
                            } else {
                                fp += 1;
                            }
                        }
                    }
                    point(rate(fp, labelled.len() - pos), rate(tp, pos), t)
                })
                .collect())
        }
    }
}

/// Envelope ROC of precomputed analyses under `sweep`.
pub fn roc_from_analyses(entries: &[(&Sample, &FrameAnalysis)], sweep: &Sweep, level: Level) -> Result<EvalCurve> {
    EvalCurve::envelope(sweep_rates(entries, sweep, level)?)
}

/// ROC ranking frames by their continuous frame score.
pub fn frame_score_roc(entries: &[(&Sample, &FrameAnalysis)]) -> Result<EvalCurve> {
    let scores: Vec<f64> = entries.iter().map(|(_, a)| a.frame_score()).collect::<Result<_>>()?;
    let labels: Vec<bool> = entries.iter().map(|(s, _)| frame_label(s)).collect::<Result<_>>()?;
    roc_from_scores(&scores, &labels)
}

/// Analyses of every scorable sample of `dataset`, paired with the sample.
pub fn analyze_dataset<'a>(
    dataset: &'a Dataset,
    inpainter: &InpainterModel,
    detector: &DetectorModel,
) -> Result<Vec<(&'a Sample, FrameAnalysis)>> {
    let inputs = dataset.model_inputs()?;
    let tensors: Vec<_> = inputs.iter().map(|(_, x)| x.clone()).collect();
    let analyses = analyze_all(&tensors, inpainter, detector)?;
    Ok(inputs
        .iter()
        .map(|(i, _)| &dataset.samples[*i])
        .zip(analyses)
        .collect())
}

/// Runs both networks over `dataset` and builds the envelope ROC under the standard sweep.
pub fn roc(dataset: &Dataset, inpainter: &InpainterModel, detector: &DetectorModel, level: Level) -> Result<EvalCurve> {
    let analysed = analyze_dataset(dataset, inpainter, detector)?;
    let entries: Vec<(&Sample, &FrameAnalysis)> = analysed.iter().map(|(s, a)| (*s, a)).collect();
    let sweep = Sweep::standard(alpha_max(entries.iter().map(|(_, a)| *a)));
    roc_from_analyses(&entries, &sweep, level)
}
