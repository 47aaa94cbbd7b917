//! Synthetic surveillance-style clips: small "pedestrians" drifting over a
//! static textured background, with an optional fast, large intruder.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Frame, Layout, Sample, Split};
use crate::mask::BinaryMask;

#[derive(Clone, Debug, PartialEq)]
pub struct ClipConfig {
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    pub walkers: usize,
    /// Frame range `[start, end)` during which the intruder is visible.
    pub anomaly: Option<(usize, usize)>,
    pub seed: u64,
}

impl Default for ClipConfig {
    fn default() -> Self {
        Self {
            height: 56,
            width: 56,
            frames: 50,
            walkers: 5,
            anomaly: None,
            seed: 0,
        }
    }
}

struct Walker {
    row: f64,
    col: f64,
    speed: f64,
}

const WALKER_H: usize = 7;
const WALKER_W: usize = 3;
const INTRUDER: usize = 12;
const INTRUDER_SPEED: f64 = 3.0;

fn quantise(v: f64) -> f32 {
    (v.clamp(0.0, 1.0) * 255.0).round() as f32 / 255.0
}

/// Renders a clip as a frame-directory dataset named `name`.
///
/// Frames with the intruder are labeled irregular and carry its footprint as
/// the pixel mask; every other frame has an empty mask.
pub fn walking_texture_clip(cfg: &ClipConfig, name: &str) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (h, w) = (cfg.height, cfg.width);
    let phase: f64 = rng.gen_range(0.0..6.28);
    let background: Vec<f64> = (0..h * w)
        .map(|p| {
            let (y, x) = ((p / w) as f64, (p % w) as f64);
            0.3 + 0.08 * ((x * 0.45 + phase).sin() * (y * 0.3).cos()) + 0.002 * y
        })
        .collect();
    let mut walkers: Vec<Walker> = (0..cfg.walkers)
        .map(|_| Walker {
            row: rng.gen_range(0.0..(h - WALKER_H) as f64),
            col: rng.gen_range(0.0..w as f64),
            speed: if rng.gen_bool(0.5) { 1.0 } else { -1.0 } * rng.gen_range(0.6..1.2),
        })
        .collect();
    let intruder_row = rng.gen_range(0..h.saturating_sub(INTRUDER).max(1));

    let mut samples = Vec::with_capacity(cfg.frames);
    for t in 0..cfg.frames {
        let mut px = background.clone();
        for wk in &walkers {
            let top = wk.row.round() as usize;
            let left = wk.col.round() as isize;
            for dy in 0..WALKER_H {
                for dx in 0..WALKER_W {
                    let x = (left + dx as isize).rem_euclid(w as isize) as usize;
                    let y = top + dy;
                    if y < h {
                        px[y * w + x] = 0.75;
                    }
                }
            }
        }
        let mut mask = BinaryMask::empty(h, w);
        let active = cfg.anomaly.is_some_and(|(s, e)| t >= s && t < e);
        if let (true, Some((start, _))) = (active, cfg.anomaly) {
            let left = ((t - start) as f64 * INTRUDER_SPEED) as usize % w.saturating_sub(INTRUDER).max(1);
            for y in intruder_row..(intruder_row + INTRUDER).min(h) {
                for x in left..(left + INTRUDER).min(w) {
                    let checker = ((x - left) / 3 + (y - intruder_row) / 3) % 2 == 0;
                    px[y * w + x] = if checker { 1.0 } else { 0.05 };
                    mask.set(y, x, true);
                }
            }
        }
        let frame = Frame::new(h, w, px.into_iter().map(quantise).collect(), t)
            .expect("pixels are clamped");
        samples.push(Sample {
            clip: Some(name.to_string()),
            frame_label: Some(active),
            pixel_mask: Some(mask),
            ..Sample::still(frame)
        });
        for wk in &mut walkers {
            wk.col = (wk.col + wk.speed).rem_euclid(w as f64);
        }
    }
    Dataset {
        split: if cfg.anomaly.is_some() { Split::Test } else { Split::Train },
        layout: Layout::FrameDirectory,
        samples,
    }
}
