//! PNG outputs: masks, heatmaps and the ROC plot.

use std::path::Path;

use image::{Rgb, RgbImage};

use avid_core::detection::FrameAnalysis;
use avid_core::evaluation::EvalCurve;
use avid_core::{AvidError, BinaryMask, Result};

fn save_rgb(path: &Path, img: &RgbImage) -> Result<()> {
    img.save(path).map_err(|e| AvidError::load(path, e.to_string()))
}

pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    avid_core::data::io::write_mask(path, mask)
}

/// Residual map, scaled so the largest residual in the frame is white.
pub fn write_residual(path: &Path, analysis: &FrameAnalysis) -> Result<()> {
    let r = &analysis.residual;
    let peak = r.max().max(f32::EPSILON);
    let values: Vec<f32> = r.values.iter().map(|v| v / peak).collect();
    avid_core::data::io::write_gray(path, r.height, r.width, &values)
}

/// Per-block irregularity `1 - O` painted over each block's pixels.
pub fn write_score_map(path: &Path, analysis: &FrameAnalysis) -> Result<()> {
    let (h, w) = (analysis.residual.height, analysis.residual.width);
    let scores = analysis.scores.values();
    let mut values = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            values[y * w + x] = 1.0 - scores[analysis.grid.block_of(y, x)];
        }
    }
    avid_core::data::io::write_gray(path, h, w, &values)
}

const PLOT: u32 = 256;
const MARGIN: u32 = 16;
const COLORS: [[u8; 3]; 4] = [[200, 30, 30], [30, 100, 200], [30, 150, 60], [150, 80, 160]];

fn to_pixel(fpr: f64, tpr: f64) -> (i64, i64) {
    let span = (PLOT - 2 * MARGIN) as f64;
    let x = MARGIN as f64 + fpr.clamp(0.0, 1.0) * span;
    let y = (PLOT - MARGIN) as f64 - tpr.clamp(0.0, 1.0) * span;
    (x.round() as i64, y.round() as i64)
}

fn line(img: &mut RgbImage, from: (i64, i64), to: (i64, i64), color: Rgb<u8>) {
    let (mut x, mut y) = from;
    let (dx, dy) = ((to.0 - x).abs(), -(to.1 - y).abs());
    let (sx, sy) = ((to.0 - x).signum(), (to.1 - y).signum());
    let mut err = dx + dy;
    loop {
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
        if (x, y) == to {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// ROC curves on a unit square with the chance diagonal; one color per curve.
pub fn write_roc(path: &Path, curves: &[&EvalCurve]) -> Result<()> {
    let mut img = RgbImage::from_pixel(PLOT, PLOT, Rgb([255, 255, 255]));
    let axis = Rgb([0, 0, 0]);
    line(&mut img, to_pixel(0.0, 0.0), to_pixel(1.0, 0.0), axis);
    line(&mut img, to_pixel(0.0, 0.0), to_pixel(0.0, 1.0), axis);
    line(&mut img, to_pixel(0.0, 0.0), to_pixel(1.0, 1.0), Rgb([190, 190, 190]));
    for (curve, color) in curves.iter().zip(COLORS.iter().cycle()) {
        for pair in curve.points.windows(2) {
            line(
                &mut img,
                to_pixel(pair[0].fpr, pair[0].tpr),
                to_pixel(pair[1].fpr, pair[1].tpr),
                Rgb(*color),
            );
        }
    }
    save_rgb(path, &img)
}
