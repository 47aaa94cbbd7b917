use rand::Rng;

use super::{ArchConfig, Network, INPUT_CHANNELS};
use crate::error::{AvidError, Result};
use crate::models::Gradients;
use crate::nn::{
    leaky_relu, leaky_relu_backward, sigmoid, sigmoid_backward, upsample_nearest,
    upsample_nearest_backward, Conv2d, ConvCache,
};
use crate::tensor::{Real, Tensor};

/// U-Net style encoder-decoder.
///
/// Level 0 is a stride-1 3x3 convolution; every deeper level halves the
/// resolution with a stride-2 3x3 convolution. Each decoder level upsamples
/// the level below (nearest neighbour), concatenates the matching encoder
/// output and applies a 3x3 convolution. A 1x1 convolution with sigmoid maps
/// back to three channels.
#[derive(Clone, Debug, PartialEq)]
pub struct InpainterModel<T = f32> {
    encoders: Vec<Conv2d<T>>,
    /// `decoders[l]` produces decoder level `l`, for `l < levels - 1`.
    decoders: Vec<Conv2d<T>>,
    head: Conv2d<T>,
    input_size: (usize, usize),
}

pub struct InpainterCache<T> {
    enc_convs: Vec<ConvCache<T>>,
    enc_out: Vec<Tensor<T>>,
    dec_convs: Vec<ConvCache<T>>,
    dec_out: Vec<Tensor<T>>,
    head_conv: ConvCache<T>,
    output: Tensor<T>,
}

/// `(in, out, kernel, stride, pad)` of every layer in canonical order.
fn layer_geometry(arch: &ArchConfig) -> Vec<(usize, usize, usize, usize, usize)> {
    let w = &arch.inpainter_widths;
    let mut out = vec![(INPUT_CHANNELS, w[0], 3, 1, 1)];
    out.extend((1..w.len()).map(|l| (w[l - 1], w[l], 3, 2, 1)));
    out.extend((0..w.len() - 1).map(|l| (w[l + 1] + w[l], w[l], 3, 1, 1)));
    out.push((w[0], INPUT_CHANNELS, 1, 1, 0));
    out
}

impl<T: Real> InpainterModel<T> {
    pub(crate) fn init<R: Rng>(arch: &ArchConfig, rng: &mut R) -> Self {
        let levels = arch.inpainter_widths.len();
        let mut layers: Vec<Conv2d<T>> = layer_geometry(arch)
            .into_iter()
            .map(|(cin, cout, k, s, p)| Conv2d::he_normal(cin, cout, k, s, p, rng))
            .collect();
        let head = layers.pop().expect("non-empty");
        let decoders = layers.split_off(levels);
        let encoders = layers;
        Self {
            encoders,
            decoders,
            head,
            input_size: arch.input_size(),
        }
    }

    /// Assembles an inpainter from explicit layers (encoders, decoders, head).
    pub fn from_layers(arch: &ArchConfig, mut layers: Vec<Conv2d<T>>) -> Result<Self> {
        arch.validate()?;
        let levels = arch.inpainter_widths.len();
        if layers.len() != 2 * levels {
            return Err(AvidError::config("inpainter layer count does not match widths"));
        }
        let head = layers.pop().expect("non-empty");
        let decoders = layers.split_off(levels);
        let model = Self {
            encoders: layers,
            decoders,
            head,
            input_size: arch.input_size(),
        };
        for (a, b) in model.layers().iter().zip(layer_geometry(arch)) {
            if (a.in_channels, a.out_channels, a.kernel, a.stride, a.pad) != b {
                return Err(AvidError::config("inpainter layer does not match the widths"));
            }
        }
        Ok(model)
    }

    pub fn input_size(&self) -> (usize, usize) {
        self.input_size
    }

    pub fn levels(&self) -> usize {
        self.encoders.len()
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let want = (INPUT_CHANNELS, self.input_size.0, self.input_size.1);
        if x.shape() != want {
            return Err(AvidError::argument(format!(
                "inpainter expects input {want:?}, got {:?}",
                x.shape()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, InpainterCache<T>)> {
        self.check_input(x)?;
        let levels = self.levels();
        let mut enc_convs = Vec::with_capacity(levels);
        let mut enc_out: Vec<Tensor<T>> = Vec::with_capacity(levels);
        for (l, conv) in self.encoders.iter().enumerate() {
            let input = if l == 0 { x } else { &enc_out[l - 1] };
            let (z, cache) = conv.forward(input);
            enc_convs.push(cache);
            enc_out.push(leaky_relu(&z));
        }
        // Decoder levels are produced deepest first; store them by level index.
        let mut dec_convs: Vec<Option<ConvCache<T>>> = (0..levels - 1).map(|_| None).collect();
        let mut dec_out: Vec<Option<Tensor<T>>> = (0..levels - 1).map(|_| None).collect();
        for l in (0..levels - 1).rev() {
            let below = if l + 1 == levels - 1 {
                &enc_out[levels - 1]
            } else {
                dec_out[l + 1].as_ref().expect("deeper level computed")
            };
            let skip = &enc_out[l];
            let up = upsample_nearest(below, skip.height(), skip.width());
            let (z, cache) = self.decoders[l].forward(&up.concat_channels(skip));
            dec_convs[l] = Some(cache);
            dec_out[l] = Some(leaky_relu(&z));
        }
        let dec_convs: Vec<_> = dec_convs.into_iter().map(|c| c.expect("filled")).collect();
        let dec_out: Vec<_> = dec_out.into_iter().map(|c| c.expect("filled")).collect();
        let top = dec_out.first().unwrap_or(&enc_out[0]);
        let (z, head_conv) = self.head.forward(top);
        let output = z.map(sigmoid);
        Ok((
            output.clone(),
            InpainterCache {
                enc_convs,
                enc_out,
                dec_convs,
                dec_out,
                head_conv,
                output,
            },
        ))
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward(x)?.0)
    }

    /// Back-propagates `d_out` (gradient w.r.t. the output image).
    pub fn backward(
        &self,
        cache: &InpainterCache<T>,
        d_out: &Tensor<T>,
        want_input_grad: bool,
    ) -> (Gradients<T>, Option<Tensor<T>>) {
        let levels = self.levels();
        let mut grads = self.zero_gradients();
        // Canonical order: encoders, decoders, head.
        let enc_idx = |l: usize| 2 * l;
        let dec_idx = |l: usize| 2 * (levels + l);
        let head_idx = 2 * (2 * levels - 1);

        let mut g_enc: Vec<Option<Tensor<T>>> = (0..levels).map(|_| None).collect();
        let mut g_dec: Vec<Option<Tensor<T>>> = (0..levels - 1).map(|_| None).collect();
        let accumulate = |slot: &mut Option<Tensor<T>>, g: Tensor<T>| match slot {
            Some(acc) => acc.add_assign(&g),
            None => *slot = Some(g),
        };

        let dz = sigmoid_backward(&cache.output, d_out);
        let (gw, gb) = grads.arrays[head_idx..].split_at_mut(1);
        let g_top = self
            .head
            .backward(&cache.head_conv, &dz, &mut gw[0], &mut gb[0], true)
            .expect("input grad requested");
        if levels > 1 {
            g_dec[0] = Some(g_top);
        } else {
            g_enc[0] = Some(g_top);
        }

        for l in 0..levels.saturating_sub(1) {
            let g = g_dec[l].take().expect("decoder gradient available");
            let dz = leaky_relu_backward(&cache.dec_out[l], &g);
            let (gw, gb) = grads.arrays[dec_idx(l)..].split_at_mut(1);
            let g_cat = self.decoders[l]
                .backward(&cache.dec_convs[l], &dz, &mut gw[0], &mut gb[0], true)
                .expect("input grad requested");
            let below_channels = self.decoders[l].in_channels - self.encoders[l].out_channels;
            let (g_up, g_skip) = g_cat.split_channels(below_channels);
            accumulate(&mut g_enc[l], g_skip);
            let below = if l + 1 == levels - 1 {
                &cache.enc_out[levels - 1]
            } else {
                &cache.dec_out[l + 1]
            };
            let g_below = upsample_nearest_backward(&g_up, below.height(), below.width());
            if l + 1 == levels - 1 {
                accumulate(&mut g_enc[levels - 1], g_below);
            } else {
                accumulate(&mut g_dec[l + 1], g_below);
            }
        }

        let mut dx = None;
        for l in (0..levels).rev() {
            let g = g_enc[l].take().expect("encoder gradient available");
            let dz = leaky_relu_backward(&cache.enc_out[l], &g);
            let (gw, gb) = grads.arrays[enc_idx(l)..].split_at_mut(1);
            let need = l > 0 || want_input_grad;
            let d_in = self.encoders[l].backward(&cache.enc_convs[l], &dz, &mut gw[0], &mut gb[0], need);
            if l > 0 {
                accumulate(&mut g_enc[l - 1], d_in.expect("input grad requested"));
            } else {
                dx = d_in;
            }
        }
        (grads, dx)
    }
}

impl<T: Real> Network<T> for InpainterModel<T> {
    fn layers(&self) -> Vec<&Conv2d<T>> {
        self.encoders
            .iter()
            .chain(&self.decoders)
            .chain(std::iter::once(&self.head))
            .collect()
    }

    fn layers_mut(&mut self) -> Vec<&mut Conv2d<T>> {
        self.encoders
            .iter_mut()
            .chain(self.decoders.iter_mut())
            .chain(std::iter::once(&mut self.head))
            .collect()
    }

    fn layer_names(&self) -> Vec<String> {
        (0..self.encoders.len())
            .map(|l| format!("enc{l}"))
            .chain((0..self.decoders.len()).map(|l| format!("dec{l}")))
            .chain(std::iter::once("head".to_string()))
            .collect()
    }
}
