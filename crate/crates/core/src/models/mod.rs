//! The inpainter and detector networks, their configuration and region geometry.

pub mod checkpoint;
mod detector;
mod inpainter;
mod region;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ModelInput;
use crate::error::{AvidError, Result};
use crate::nn::Conv2d;
use crate::tensor::Real;

pub use checkpoint::{Checkpoint, NamedTensor, RngState};
pub use detector::{DetectorCache, DetectorModel, ScoreGrid};
pub use inpainter::{InpainterCache, InpainterModel};
pub use region::{region_map, Block, RegionGrid};

/// One detector convolution: `((in, out), kernel, stride)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl LayerSpec {
    pub const fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
        }
    }

    pub fn pad(&self) -> usize {
        (self.kernel - 1) / 2
    }

    pub fn parameter_count(&self) -> usize {
        self.in_channels * self.out_channels * self.kernel * self.kernel + self.out_channels
    }
}

/// Default detector stack; total stride 28, so a 308x308 input yields an 11x11 grid.
pub fn default_detector_layers() -> Vec<LayerSpec> {
    vec![
        LayerSpec::new(3, 32, 5, 2),
        LayerSpec::new(32, 64, 5, 2),
        LayerSpec::new(64, 128, 3, 7),
        LayerSpec::new(128, 64, 1, 1),
        LayerSpec::new(64, 1, 1, 1),
    ]
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub input_height: usize,
    pub input_width: usize,
    /// Channel width of each encoder level of the inpainter.
    pub inpainter_widths: Vec<usize>,
    pub detector_layers: Vec<LayerSpec>,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            input_height: 308,
            input_width: 308,
            inpainter_widths: vec![64, 128, 256, 512],
            detector_layers: default_detector_layers(),
        }
    }
}

pub const INPUT_CHANNELS: usize = 3;

impl ArchConfig {
    pub fn input_size(&self) -> (usize, usize) {
        (self.input_height, self.input_width)
    }

    pub fn total_stride(&self) -> usize {
        self.detector_layers.iter().map(|l| l.stride).product()
    }

    /// Detector output grid from convolution arithmetic.
    pub fn output_grid(&self) -> Option<(usize, usize)> {
        let (mut h, mut w) = self.input_size();
        for l in &self.detector_layers {
            h = crate::nn::conv_out_len(h, l.kernel, l.stride, l.pad())?;
            w = crate::nn::conv_out_len(w, l.kernel, l.stride, l.pad())?;
        }
        Some((h, w))
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_height == 0 || self.input_width == 0 {
            return Err(AvidError::config("input size must be positive"));
        }
        if self.inpainter_widths.is_empty() || self.inpainter_widths.contains(&0) {
            return Err(AvidError::config("inpainter widths must be non-empty and positive"));
        }
        let Some(first) = self.detector_layers.first() else {
            return Err(AvidError::config("detector needs at least one layer"));
        };
        if first.in_channels != INPUT_CHANNELS {
            return Err(AvidError::config("first detector layer must take 3 channels"));
        }
        for (i, l) in self.detector_layers.iter().enumerate() {
            if l.in_channels == 0 || l.out_channels == 0 || l.kernel == 0 || l.stride == 0 {
                return Err(AvidError::config(format!(
                    "detector layer {i} has a non-positive channel, kernel or stride"
                )));
            }
            if let Some(next) = self.detector_layers.get(i + 1) {
                if next.in_channels != l.out_channels {
                    return Err(AvidError::config(format!(
                        "detector layer {} expects {} channels but layer {i} produces {}",
                        i + 1,
                        next.in_channels,
                        l.out_channels
                    )));
                }
            }
        }
        if self.detector_layers.last().map(|l| l.out_channels) != Some(1) {
            return Err(AvidError::config("last detector layer must output one channel"));
        }
        let stride = self.total_stride();
        if self.input_height % stride != 0 || self.input_width % stride != 0 {
            return Err(AvidError::config(format!(
                "input {}x{} is not divisible by the detector stride {stride}",
                self.input_height, self.input_width
            )));
        }
        let expected = (self.input_height / stride, self.input_width / stride);
        match self.output_grid() {
            Some(grid) if grid == expected => Ok(()),
            other => Err(AvidError::config(format!(
                "detector grid {other:?} does not match stride blocks {expected:?}"
            ))),
        }
    }

    pub fn inpainter_parameter_count(&self) -> usize {
        let w = &self.inpainter_widths;
        let conv = |cin: usize, cout: usize, k: usize| cin * cout * k * k + cout;
        let mut total = conv(INPUT_CHANNELS, w[0], 3);
        for l in 1..w.len() {
            total += conv(w[l - 1], w[l], 3);
        }
        for l in 0..w.len().saturating_sub(1) {
            total += conv(w[l + 1] + w[l], w[l], 3);
        }
        total + conv(w[0], INPUT_CHANNELS, 1)
    }

    pub fn detector_parameter_count(&self) -> usize {
        self.detector_layers.iter().map(LayerSpec::parameter_count).sum()
    }
}

/// Flat, ordered access to a network's convolution layers.
pub trait Network<T: Real> {
    fn layers(&self) -> Vec<&Conv2d<T>>;
    fn layers_mut(&mut self) -> Vec<&mut Conv2d<T>>;
    fn layer_names(&self) -> Vec<String>;

    fn parameter_count(&self) -> usize {
        self.layers().iter().map(|c| c.parameter_count()).sum()
    }

    /// Parameter arrays in canonical order: weight then bias of every layer.
    fn parameters(&self) -> Vec<&[T]> {
        self.layers()
            .into_iter()
            .flat_map(|c| [c.weight.as_slice(), c.bias.as_slice()])
            .collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut [T]> {
        self.layers_mut()
            .into_iter()
            .flat_map(|c| [c.weight.as_mut_slice(), c.bias.as_mut_slice()])
            .collect()
    }

    /// `(name, shape)` of every parameter array, in canonical order.
    fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        self.layers()
            .into_iter()
            .zip(self.layer_names())
            .flat_map(|(c, n)| {
                [
                    (
                        format!("{n}.weight"),
                        vec![c.out_channels, c.in_channels, c.kernel, c.kernel],
                    ),
                    (format!("{n}.bias"), vec![c.out_channels]),
                ]
            })
            .collect()
    }

    fn zero_gradients(&self) -> Gradients<T> {
        Gradients {
            arrays: self.parameters().iter().map(|p| vec![T::zero(); p.len()]).collect(),
        }
    }
}

/// Gradient arrays aligned with [`Network::parameters`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub arrays: Vec<Vec<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn add(&mut self, other: &Self) {
        for (a, b) in self.arrays.iter_mut().zip(&other.arrays) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for a in &mut self.arrays {
            for x in a.iter_mut() {
                *x *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.arrays.iter().flatten().all(|v| v.is_finite())
    }

    pub fn flat(&self) -> Vec<T> {
        self.arrays.iter().flatten().copied().collect()
    }
}

/// Builds both networks with zero biases and N(0, 2 / fan_in) weights.
pub fn init_models(arch: &ArchConfig, seed: u64) -> Result<(InpainterModel, DetectorModel)> {
    init_models_as::<f32>(arch, seed)
}

pub fn init_models_as<T: Real>(
    arch: &ArchConfig,
    seed: u64,
) -> Result<(InpainterModel<T>, DetectorModel<T>)> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inpainter = InpainterModel::init(arch, &mut rng);
    let detector = DetectorModel::init(arch, &mut rng);
    Ok((inpainter, detector))
}

/// Runs the inpainter on a clean or noisy input.
pub fn inpainter_forward(model: &InpainterModel, x: &ModelInput) -> Result<ModelInput> {
    let out = model.infer(&x.tensor)?;
    Ok(ModelInput {
        tensor: out,
        source_frame_index: x.source_frame_index,
    })
}

pub fn detector_forward(model: &DetectorModel, x: &ModelInput) -> Result<ScoreGrid> {
    model.infer(&x.tensor)
}
