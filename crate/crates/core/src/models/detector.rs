use rand::Rng;

use super::{ArchConfig, LayerSpec, Network};
use crate::error::{AvidError, Result};
use crate::models::Gradients;
use crate::nn::{leaky_relu, leaky_relu_backward, sigmoid, sigmoid_backward, Conv2d, ConvCache};
use crate::tensor::{Real, Tensor};

/// Regularity likelihood of each detector cell, row-major, values in (0, 1).
///
/// Cell `(a, b)` has flat index `a * cols + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreGrid<T = f32> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
}

impl<T: Real> ScoreGrid<T> {
    pub fn new(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(AvidError::argument(format!(
                "score grid {rows}x{cols} needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            values: vec![value; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn flat_index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn cell(&self, flat: usize) -> (usize, usize) {
        (flat / self.cols, flat % self.cols)
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[self.flat_index(row, col)]
    }
}

/// Fully convolutional patch scorer: strided convolutions with leaky
/// rectifiers and a final sigmoid. No pooling, no dense layers.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectorModel<T = f32> {
    layers: Vec<Conv2d<T>>,
    input_size: (usize, usize),
    grid: (usize, usize),
}

pub struct DetectorCache<T> {
    convs: Vec<ConvCache<T>>,
    /// Post-activation output of every layer.
    outputs: Vec<Tensor<T>>,
}

impl<T: Real> DetectorModel<T> {
    pub(crate) fn init<R: Rng>(arch: &ArchConfig, rng: &mut R) -> Self {
        let layers = arch
            .detector_layers
            .iter()
            .map(|l| Conv2d::he_normal(l.in_channels, l.out_channels, l.kernel, l.stride, l.pad(), rng))
            .collect();
        Self {
            layers,
            input_size: arch.input_size(),
            grid: arch.output_grid().expect("validated architecture"),
        }
    }

    /// Assembles a detector from explicit layers (e.g. from a checkpoint).
    pub fn from_layers(arch: &ArchConfig, layers: Vec<Conv2d<T>>) -> Result<Self> {
        arch.validate()?;
        if layers.len() != arch.detector_layers.len() {
            return Err(AvidError::config("layer count does not match the layer spec"));
        }
        for (c, l) in layers.iter().zip(&arch.detector_layers) {
            let spec = LayerSpec::new(c.in_channels, c.out_channels, c.kernel, c.stride);
            if spec != *l || c.pad != l.pad() {
                return Err(AvidError::config("layer does not match the layer spec"));
            }
        }
        Ok(Self {
            layers,
            input_size: arch.input_size(),
            grid: arch.output_grid().expect("validated architecture"),
        })
    }

    pub fn input_size(&self) -> (usize, usize) {
        self.input_size
    }

    pub fn output_grid(&self) -> (usize, usize) {
        self.grid
    }

    pub fn layer_spec(&self) -> Vec<LayerSpec> {
        self.layers
            .iter()
            .map(|c| LayerSpec::new(c.in_channels, c.out_channels, c.kernel, c.stride))
            .collect()
    }

    pub fn total_stride(&self) -> usize {
        self.layers.iter().map(|c| c.stride).product()
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let want = (self.layers[0].in_channels, self.input_size.0, self.input_size.1);
        if x.shape() != want {
            return Err(AvidError::argument(format!(
                "detector expects input {want:?}, got {:?}",
                x.shape()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(ScoreGrid<T>, DetectorCache<T>)> {
        self.check_input(x)?;
        let mut convs = Vec::with_capacity(self.layers.len());
        let mut outputs: Vec<Tensor<T>> = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (i, conv) in self.layers.iter().enumerate() {
            let input = if i == 0 { x } else { &outputs[i - 1] };
            let (z, cache) = conv.forward(input);
            let a = if i == last { z.map(sigmoid) } else { leaky_relu(&z) };
            convs.push(cache);
            outputs.push(a);
        }
        let out = outputs.last().expect("at least one layer");
        let grid = ScoreGrid::new(out.height(), out.width(), out.data().to_vec())?;
        Ok((grid, DetectorCache { convs, outputs }))
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<ScoreGrid<T>> {
        Ok(self.forward(x)?.0)
    }

    /// Back-propagates `d_scores` (gradient w.r.t. the sigmoid outputs).
    /// Returns parameter gradients and, if requested, the input gradient.
    pub fn backward(
        &self,
        cache: &DetectorCache<T>,
        d_scores: &[T],
        want_input_grad: bool,
    ) -> (Gradients<T>, Option<Tensor<T>>) {
        let mut grads = self.zero_gradients();
        let last = self.layers.len() - 1;
        let out = &cache.outputs[last];
        let mut dy = Tensor::from_vec(1, out.height(), out.width(), d_scores.to_vec());
        let mut dx = None;
        for i in (0..self.layers.len()).rev() {
            let dz = if i == last {
                sigmoid_backward(&cache.outputs[i], &dy)
            } else {
                leaky_relu_backward(&cache.outputs[i], &dy)
            };
            let (gw, rest) = grads.arrays[2 * i..].split_at_mut(1);
            let need_dx = i > 0 || want_input_grad;
            let d_in = self.layers[i].backward(&cache.convs[i], &dz, &mut gw[0], &mut rest[0], need_dx);
            match d_in {
                Some(d) if i > 0 => dy = d,
                other => dx = other,
            }
        }
        (grads, dx)
    }
}

impl<T: Real> Network<T> for DetectorModel<T> {
    fn layers(&self) -> Vec<&Conv2d<T>> {
        self.layers.iter().collect()
    }

    fn layers_mut(&mut self) -> Vec<&mut Conv2d<T>> {
        self.layers.iter_mut().collect()
    }

    fn layer_names(&self) -> Vec<String> {
        (0..self.layers.len()).map(|i| format!("conv{i}")).collect()
    }
}
