//! Frames, model inputs, datasets and the benchmark generators.

pub mod clip;
pub mod digits;
pub mod io;
pub mod ir_mnist;
pub mod noise;
pub mod temporal;

use crate::error::{AvidError, Result};
use crate::mask::BinaryMask;
use crate::tensor::Tensor;

pub use io::{load_dataset, write_dataset, Layout};
pub use ir_mnist::{generate_ir_mnist, IrMnistConfig};
pub use noise::{inject_noise, NoiseConfig, NoisyInput};
pub use temporal::{preprocess_temporal, MIN_TEMPORAL_INDEX};

/// A single grayscale frame with intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    pixels: Vec<f32>,
    pub index: usize,
}

impl Frame {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>, index: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(AvidError::argument("frame dimensions must be positive"));
        }
        if pixels.len() != height * width {
            return Err(AvidError::argument(format!(
                "frame of {height}x{width} needs {} pixels, got {}",
                height * width,
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(AvidError::argument(format!(
                "pixel value {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            pixels,
            index,
        })
    }

    pub fn filled(height: usize, width: usize, value: f32, index: usize) -> Self {
        Self {
            height,
            width,
            pixels: vec![value.clamp(0.0, 1.0); height * width],
            index,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    /// Zero-pads on the bottom and right.
    pub fn padded(&self, height: usize, width: usize) -> Self {
        let mut pixels = vec![0.0; height * width];
        for y in 0..self.height.min(height) {
            for x in 0..self.width.min(width) {
                pixels[y * width + x] = self.get(y, x);
            }
        }
        Self {
            height,
            width,
            pixels,
            index: self.index,
        }
    }
}

/// An ordered run of equally sized frames.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Frame>,
}

impl FrameSequence {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        if let Some(first) = frames.first() {
            if frames.iter().any(|f| f.dims() != first.dims()) {
                return Err(AvidError::argument("frame sizes differ within a clip"));
            }
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Three stacked channels fed to both networks.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInput {
    pub tensor: Tensor<f32>,
    pub source_frame_index: usize,
}

impl ModelInput {
    /// Replicates a still image over the three channels.
    pub fn from_still(frame: &Frame) -> Self {
        let mut data = Vec::with_capacity(3 * frame.pixels.len());
        for _ in 0..3 {
            data.extend_from_slice(&frame.pixels);
        }
        Self {
            tensor: Tensor::from_vec(3, frame.height, frame.width, data),
            source_frame_index: frame.index,
        }
    }

    pub fn height(&self) -> usize {
        self.tensor.height()
    }

    pub fn width(&self) -> usize {
        self.tensor.width()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Per-tile irregularity labels of a grid composite.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TileLabels {
    pub rows: usize,
    pub cols: usize,
    pub irregular: Vec<bool>,
}

impl TileLabels {
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.irregular[row * self.cols + col]
    }

    pub fn any(&self) -> bool {
        self.irregular.iter().any(|&b| b)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// Clip name for frame-directory data; `None` for still images.
    pub clip: Option<String>,
    pub frame: Frame,
    pub frame_label: Option<bool>,
    pub pixel_mask: Option<BinaryMask>,
    pub tile_labels: Option<TileLabels>,
    /// Digit class of every tile, row-major; only known right after generation.
    pub tile_digits: Option<Vec<u8>>,
}

impl Sample {
    pub fn still(frame: Frame) -> Self {
        Self {
            clip: None,
            frame,
            frame_label: None,
            pixel_mask: None,
            tile_labels: None,
            tile_digits: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub layout: Layout,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Zero-pads every frame and mask so both sides are multiples of `multiple`.
    pub fn pad_to_multiple(&mut self, multiple: usize) {
        if multiple <= 1 {
            return;
        }
        let round = |v: usize| v.div_ceil(multiple) * multiple;
        for s in &mut self.samples {
            let (h, w) = (round(s.frame.height), round(s.frame.width));
            if (h, w) != s.frame.dims() {
                s.frame = s.frame.padded(h, w);
                if let Some(m) = &s.pixel_mask {
                    s.pixel_mask = Some(m.padded(h, w));
                }
            }
        }
    }

    /// Splits off the last `fraction` of samples (at least one) as a held-out set.
    pub fn hold_out(mut self, fraction: f64) -> Result<(Dataset, Dataset)> {
        if self.samples.len() < 2 {
            return Err(AvidError::argument(
                "need at least two samples to hold out a validation set",
            ));
        }
        let n_val = ((self.samples.len() as f64 * fraction).round() as usize)
            .clamp(1, self.samples.len() - 1);
        let val = self.samples.split_off(self.samples.len() - n_val);
        let validation = Dataset {
            split: self.split,
            layout: self.layout,
            samples: val,
        };
        Ok((self, validation))
    }

    /// Network inputs for every scorable sample, paired with the sample position.
    ///
    /// Still images are replicated over the channels; clip frames go through
    /// temporal preprocessing and frames too early in their clip are skipped.
    pub fn model_inputs(&self) -> Result<Vec<(usize, ModelInput)>> {
        match self.layout {
            Layout::IrMnist => Ok(self
                .samples
                .iter()
                .enumerate()
                .map(|(i, s)| (i, ModelInput::from_still(&s.frame)))
                .collect()),
            Layout::FrameDirectory => {
                let mut out = Vec::new();
                let mut start = 0;
                while start < self.samples.len() {
                    let clip = &self.samples[start].clip;
                    let mut end = start;
                    while end < self.samples.len() && &self.samples[end].clip == clip {
                        end += 1;
                    }
                    let seq = FrameSequence::new(
                        self.samples[start..end]
                            .iter()
                            .map(|s| s.frame.clone())
                            .collect(),
                    )?;
                    for t in MIN_TEMPORAL_INDEX..seq.len() {
                        out.push((start + t, preprocess_temporal(&seq, t)?));
                    }
                    start = end;
                }
                Ok(out)
            }
        }
    }
}

/// Mixes a base seed with stream identifiers (SplitMix64 finaliser).
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut h = base ^ 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h = h.wrapping_add(p).wrapping_add(0x9E37_79B9_7F4A_7C15);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_rejects_out_of_range_pixels() {
        assert!(Frame::new(1, 2, vec![0.0, 1.5], 0).is_err());
        assert!(Frame::new(0, 2, vec![], 0).is_err());
        assert!(Frame::new(1, 2, vec![0.0, 1.0], 0).is_ok());
    }

    #[test]
    fn padding_rounds_up_to_multiple() {
        let mut ds = Dataset {
            split: Split::Test,
            layout: Layout::FrameDirectory,
            samples: vec![Sample {
                pixel_mask: Some(BinaryMask::full(30, 20)),
                ..Sample::still(Frame::filled(30, 20, 0.5, 0))
            }],
        };
        ds.pad_to_multiple(28);
        let s = &ds.samples[0];
        assert_eq!(s.frame.dims(), (56, 28));
        assert_eq!(s.frame.get(29, 19), 0.5);
        assert_eq!(s.frame.get(30, 0), 0.0);
        assert_eq!(s.pixel_mask.as_ref().unwrap().count(), 600);
    }

    #[test]
    fn derived_seeds_differ_per_stream() {
        assert_ne!(derive_seed(1, &[0]), derive_seed(1, &[1]));
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
        assert_eq!(derive_seed(9, &[4, 2]), derive_seed(9, &[4, 2]));
    }
}
