//! 28x28 handwritten-style digit pools.
//!
//! Digits come either from MNIST idx files or from a stroke renderer that
//! draws each class from a fixed skeleton under random affine jitter, stroke
//! width and control-point wobble.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{AvidError, Result};

pub const DIGIT_SIDE: usize = 28;
pub const DIGIT_PIXELS: usize = DIGIT_SIDE * DIGIT_SIDE;

#[derive(Clone, Debug, PartialEq)]
pub struct DigitImage {
    pub label: u8,
    /// Row-major intensities in `[0, 1]`.
    pub pixels: Vec<f32>,
}

/// Labeled digits with separate pools for building train and test composites.
#[derive(Clone, Debug, Default)]
pub struct DigitSource {
    pub train: Vec<DigitImage>,
    pub test: Vec<DigitImage>,
}

impl DigitSource {
    /// Indices of each class in `pool`, `[class] -> Vec<index>`.
    pub fn by_class(pool: &[DigitImage]) -> Vec<Vec<usize>> {
        let mut classes = vec![Vec::new(); 10];
        for (i, d) in pool.iter().enumerate() {
            if (d.label as usize) < 10 {
                classes[d.label as usize].push(i);
            }
        }
        classes
    }

    pub fn validate(&self) -> Result<()> {
        for (name, pool) in [("train", &self.train), ("test", &self.test)] {
            let classes = Self::by_class(pool);
            if let Some(missing) = classes.iter().position(|c| c.is_empty()) {
                return Err(AvidError::config(format!(
                    "digit source {name} pool has no images of class {missing}"
                )));
            }
            if let Some(bad) = pool.iter().find(|d| d.pixels.len() != DIGIT_PIXELS) {
                return Err(AvidError::config(format!(
                    "digit of class {} has {} pixels, expected {DIGIT_PIXELS}",
                    bad.label,
                    bad.pixels.len()
                )));
            }
        }
        Ok(())
    }

    /// Renders `per_class` train and test digits of every class.
    pub fn synthetic(per_class: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let render_pool = |rng: &mut ChaCha8Rng| {
            let mut pool = Vec::with_capacity(per_class * 10);
            for _ in 0..per_class {
                for label in 0..10u8 {
                    pool.push(render_digit(label, rng));
                }
            }
            pool
        };
        let train = render_pool(&mut rng);
        let test = render_pool(&mut rng);
        Self { train, test }
    }

    /// Loads the four standard MNIST idx files (uncompressed) from `dir`.
    pub fn from_mnist_dir(dir: &Path) -> Result<Self> {
        let pool = |images: &str, labels: &str| -> Result<Vec<DigitImage>> {
            let imgs = read_idx_images(&dir.join(images))?;
            let labs = read_idx_labels(&dir.join(labels))?;
            if imgs.len() != labs.len() {
                return Err(AvidError::load(
                    dir.join(labels),
                    format!("{} labels for {} images", labs.len(), imgs.len()),
                ));
            }
            Ok(imgs
                .into_iter()
                .zip(labs)
                .map(|(pixels, label)| DigitImage { label, pixels })
                .collect())
        };
        Ok(Self {
            train: pool("train-images-idx3-ubyte", "train-labels-idx1-ubyte")?,
            test: pool("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")?,
        })
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| AvidError::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

pub fn read_idx_images(path: &Path) -> Result<Vec<Vec<f32>>> {
    let bytes = read_file(path)?;
    if bytes.len() < 16 || be_u32(&bytes, 0) != 0x0000_0803 {
        return Err(AvidError::load(path, "not an idx3 image file"));
    }
    let n = be_u32(&bytes, 4) as usize;
    let (rows, cols) = (be_u32(&bytes, 8) as usize, be_u32(&bytes, 12) as usize);
    if (rows, cols) != (DIGIT_SIDE, DIGIT_SIDE) {
        return Err(AvidError::load(path, format!("images are {rows}x{cols}, expected 28x28")));
    }
    if bytes.len() != 16 + n * DIGIT_PIXELS {
        return Err(AvidError::load(path, "truncated image data"));
    }
    Ok(bytes[16..]
        .chunks_exact(DIGIT_PIXELS)
        .map(|c| c.iter().map(|&b| b as f32 / 255.0).collect())
        .collect())
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read_file(path)?;
    if bytes.len() < 8 || be_u32(&bytes, 0) != 0x0000_0801 {
        return Err(AvidError::load(path, "not an idx1 label file"));
    }
    let n = be_u32(&bytes, 4) as usize;
    if bytes.len() != 8 + n {
        return Err(AvidError::load(path, "truncated label data"));
    }
    Ok(bytes[8..].to_vec())
}

enum Stroke {
    Line(Vec<(f64, f64)>),
    /// Center, radii, start and end angle (radians, y axis pointing down).
    Arc {
        center: (f64, f64),
        radii: (f64, f64),
        from: f64,
        to: f64,
    },
}

fn deg(d: f64) -> f64 {
    d * PI / 180.0
}

fn skeleton(label: u8) -> Vec<Stroke> {
    use Stroke::*;
    match label {
        0 => vec![Arc { center: (0.5, 0.5), radii: (0.28, 0.42), from: 0.0, to: 2.0 * PI }],
        1 => vec![Line(vec![(0.36, 0.22), (0.54, 0.06), (0.54, 0.94)])],
        2 => vec![
            Arc { center: (0.5, 0.3), radii: (0.24, 0.22), from: deg(-170.0), to: deg(30.0) },
            Line(vec![(0.7, 0.42), (0.2, 0.92), (0.82, 0.92)]),
        ],
        3 => vec![
            Arc { center: (0.48, 0.29), radii: (0.24, 0.2), from: deg(-160.0), to: deg(90.0) },
            Arc { center: (0.48, 0.71), radii: (0.27, 0.22), from: deg(-90.0), to: deg(160.0) },
        ],
        4 => vec![Line(vec![(0.66, 0.94), (0.66, 0.06), (0.18, 0.64), (0.84, 0.64)])],
        5 => vec![
            Line(vec![(0.78, 0.08), (0.32, 0.08), (0.28, 0.44)]),
            Arc { center: (0.48, 0.66), radii: (0.26, 0.25), from: deg(-125.0), to: deg(150.0) },
        ],
        6 => vec![
            Line(vec![(0.7, 0.06), (0.45, 0.3), (0.3, 0.6)]),
            Arc { center: (0.5, 0.7), radii: (0.21, 0.22), from: 0.0, to: 2.0 * PI },
        ],
        7 => vec![Line(vec![(0.18, 0.08), (0.82, 0.08), (0.42, 0.94)])],
        8 => vec![
            Arc { center: (0.5, 0.28), radii: (0.19, 0.19), from: 0.0, to: 2.0 * PI },
            Arc { center: (0.5, 0.7), radii: (0.24, 0.23), from: 0.0, to: 2.0 * PI },
        ],
        9 => vec![
            Arc { center: (0.48, 0.3), radii: (0.22, 0.22), from: 0.0, to: 2.0 * PI },
            Line(vec![(0.7, 0.3), (0.66, 0.6), (0.56, 0.94)]),
        ],
        _ => Vec::new(),
    }
}

/// Renders one digit of class `label` with random style.
pub fn render_digit<R: Rng>(label: u8, rng: &mut R) -> DigitImage {
    let wobble = Normal::new(0.0, 0.025).expect("valid std");
    // Random affine map from the unit glyph box onto the central 20x20 area.
    let scale = rng.gen_range(0.8..1.05);
    let aspect = rng.gen_range(0.85..1.15);
    let angle: f64 = rng.gen_range(-0.25..0.25);
    let shear = rng.gen_range(-0.25..0.25);
    let (tx, ty) = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
    let radius = rng.gen_range(0.9..1.9);
    let (sin, cos) = angle.sin_cos();
    let map = |(u, v): (f64, f64)| -> (f64, f64) {
        let (mut x, y) = ((u - 0.5) * 20.0 * scale * aspect, (v - 0.5) * 20.0 * scale);
        x += shear * y;
        (
            cos * x - sin * y + 14.0 + tx,
            sin * x + cos * y + 14.0 + ty,
        )
    };

    let mut segments: Vec<((f64, f64), (f64, f64))> = Vec::new();
    for stroke in skeleton(label) {
        let pts: Vec<(f64, f64)> = match stroke {
            Stroke::Line(p) => p
                .into_iter()
                .map(|(x, y)| (x + wobble.sample(rng), y + wobble.sample(rng)))
                .collect(),
            Stroke::Arc { center, radii, from, to } => {
                let (cx, cy) = (center.0 + wobble.sample(rng), center.1 + wobble.sample(rng));
                let (rx, ry) = (radii.0 * (1.0 + wobble.sample(rng)), radii.1 * (1.0 + wobble.sample(rng)));
                let steps = 24;
                (0..=steps)
                    .map(|i| {
                        let t = from + (to - from) * i as f64 / steps as f64;
                        (cx + rx * t.cos(), cy + ry * t.sin())
                    })
                    .collect()
            }
        };
        let mapped: Vec<_> = pts.into_iter().map(map).collect();
        segments.extend(mapped.windows(2).map(|w| (w[0], w[1])));
    }

    let mut pixels = vec![0.0f32; DIGIT_PIXELS];
    for (i, px) in pixels.iter_mut().enumerate() {
        let p = ((i % DIGIT_SIDE) as f64 + 0.5, (i / DIGIT_SIDE) as f64 + 0.5);
        let d = segments
            .iter()
            .map(|&(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min);
        // Quantised to 8-bit levels so composites survive a PNG round trip exactly.
        *px = ((radius + 0.5 - d).clamp(0.0, 1.0) * 255.0).round() as f32 / 255.0;
    }
    DigitImage { label, pixels }
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}
