//! Convolution, activation and resampling layers with hand-written backward passes.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::tensor::{Real, Tensor};

pub const LEAKY_SLOPE: f64 = 0.2;

/// Output length of a strided, zero-padded convolution along one axis.
pub fn conv_out_len(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || input + 2 * pad < kernel {
        return None;
    }
    Some((input + 2 * pad - kernel) / stride + 1)
}

/// 2-D convolution, weight laid out as `[out][in][ky][kx]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Values kept from a forward pass that the backward pass needs.
#[derive(Clone, Debug)]
pub struct ConvCache<T> {
    input_shape: (usize, usize, usize),
    out_hw: (usize, usize),
    /// im2col matrix, `[in*k*k][oh*ow]`; `None` when the layer is a plain 1x1.
    cols: Option<Vec<T>>,
    input: Option<Tensor<T>>,
}

impl<T: Real> Conv2d<T> {
    pub fn zeroed(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
            weight: vec![T::zero(); out_channels * in_channels * kernel * kernel],
            bias: vec![T::zero(); out_channels],
        }
    }

    /// Zero biases; weights from N(0, 2 / (in * k^2)).
    pub fn he_normal<R: Rng>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        let mut conv = Self::zeroed(in_channels, out_channels, kernel, stride, pad);
        let std = (2.0 / (in_channels * kernel * kernel) as f64).sqrt();
        for w in conv.weight.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *w = T::lit(z * std);
        }
        conv
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.pad == 0
    }

    pub fn output_hw(&self, height: usize, width: usize) -> Option<(usize, usize)> {
        Some((
            conv_out_len(height, self.kernel, self.stride, self.pad)?,
            conv_out_len(width, self.kernel, self.stride, self.pad)?,
        ))
    }

    fn im2col(&self, x: &Tensor<T>, oh: usize, ow: usize) -> Vec<T> {
        let (_, h, w) = x.shape();
        let k = self.kernel;
        let n = oh * ow;
        let mut cols = vec![T::zero(); self.fan_in() * n];
        for ci in 0..self.in_channels {
            let plane = x.channel(ci);
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let dst = &mut cols[row * n..(row + 1) * n];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                        let out_row = &mut dst[oy * ow..(oy + 1) * ow];
                        for (ox, o) in out_row.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                *o = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[T], shape: (usize, usize, usize), oh: usize, ow: usize) -> Tensor<T> {
        let (c, h, w) = shape;
        let k = self.kernel;
        let n = oh * ow;
        let mut dx = Tensor::zeros(c, h, w);
        for ci in 0..self.in_channels {
            let plane = dx.channel_mut(ci);
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let src = &cols[row * n..(row + 1) * n];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] += src[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn forward(&self, x: &Tensor<T>) -> (Tensor<T>, ConvCache<T>) {
        let (c, h, w) = x.shape();
        assert_eq!(c, self.in_channels, "conv input channel mismatch");
        let (oh, ow) = self
            .output_hw(h, w)
            .expect("conv input smaller than kernel");
        let n = oh * ow;
        let mut out = vec![T::zero(); self.out_channels * n];
        for (o, &b) in self.bias.iter().enumerate() {
            out[o * n..(o + 1) * n].iter_mut().for_each(|v| *v = b);
        }
        let fan_in = self.fan_in();
        let (cols, input) = if self.is_pointwise() {
            T::gemm(
                self.out_channels,
                fan_in,
                n,
                T::one(),
                &self.weight,
                (fan_in as isize, 1),
                x.data(),
                (n as isize, 1),
                T::one(),
                &mut out,
                (n as isize, 1),
            );
            (None, Some(x.clone()))
        } else {
            let cols = self.im2col(x, oh, ow);
            T::gemm(
                self.out_channels,
                fan_in,
                n,
                T::one(),
                &self.weight,
                (fan_in as isize, 1),
                &cols,
                (n as isize, 1),
                T::one(),
                &mut out,
                (n as isize, 1),
            );
            (Some(cols), None)
        };
        (
            Tensor::from_vec(self.out_channels, oh, ow, out),
            ConvCache {
                input_shape: (c, h, w),
                out_hw: (oh, ow),
                cols,
                input,
            },
        )
    }

    /// Accumulates parameter gradients into `grad_w`/`grad_b` and returns the
    /// input gradient when `want_input_grad` is set.
    pub fn backward(
        &self,
        cache: &ConvCache<T>,
        dy: &Tensor<T>,
        grad_w: &mut [T],
        grad_b: &mut [T],
        want_input_grad: bool,
    ) -> Option<Tensor<T>> {
        let (oh, ow) = cache.out_hw;
        let n = oh * ow;
        let fan_in = self.fan_in();
        assert_eq!(dy.shape(), (self.out_channels, oh, ow));
        let cols: &[T] = match (&cache.cols, &cache.input) {
            (Some(c), _) => c,
            (None, Some(x)) => x.data(),
            _ => unreachable!("conv cache holds neither cols nor input"),
        };
        for (o, gb) in grad_b.iter_mut().enumerate() {
            *gb += dy.channel(o).iter().copied().sum::<T>();
        }
        // dW += dY * cols^T
        T::gemm(
            self.out_channels,
            n,
            fan_in,
            T::one(),
            dy.data(),
            (n as isize, 1),
            cols,
            (1, n as isize),
            T::one(),
            grad_w,
            (fan_in as isize, 1),
        );
        if !want_input_grad {
            return None;
        }
        // dcols = W^T * dY
        let mut dcols = vec![T::zero(); fan_in * n];
        T::gemm(
            fan_in,
            self.out_channels,
            n,
            T::one(),
            &self.weight,
            (1, fan_in as isize),
            dy.data(),
            (n as isize, 1),
            T::zero(),
            &mut dcols,
            (n as isize, 1),
        );
        let (c, h, w) = cache.input_shape;
        if self.is_pointwise() {
            Some(Tensor::from_vec(c, h, w, dcols))
        } else {
            Some(self.col2im(&dcols, cache.input_shape, oh, ow))
        }
    }
}

pub fn leaky_relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let slope = T::lit(LEAKY_SLOPE);
    x.map(|v| if v > T::zero() { v } else { v * slope })
}

/// Backward of [`leaky_relu`] given its output (sign is preserved, so the output suffices).
pub fn leaky_relu_backward<T: Real>(out: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let slope = T::lit(LEAKY_SLOPE);
    let data = out
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&o, &g)| if o > T::zero() { g } else { g * slope })
        .collect();
    let (c, h, w) = out.shape();
    Tensor::from_vec(c, h, w, data)
}

/// Logistic sigmoid clamped to `[eps, 1 - eps]` so the result is strictly inside (0, 1).
pub fn sigmoid<T: Real>(v: T) -> T {
    let s = if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    };
    let eps = T::epsilon();
    s.max(eps).min(T::one() - eps)
}

pub fn sigmoid_backward<T: Real>(out: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let data = out
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&s, &g)| g * s * (T::one() - s))
        .collect();
    let (c, h, w) = out.shape();
    Tensor::from_vec(c, h, w, data)
}

/// Nearest-neighbour x2 upsampling cropped to `(height, width)`.
pub fn upsample_nearest<T: Real>(x: &Tensor<T>, height: usize, width: usize) -> Tensor<T> {
    let (c, h, w) = x.shape();
    assert!(height <= 2 * h && width <= 2 * w, "upsample target too large");
    let mut out = Tensor::zeros(c, height, width);
    for ch in 0..c {
        let src = x.channel(ch);
        let dst = out.channel_mut(ch);
        for y in 0..height {
            for xx in 0..width {
                dst[y * width + xx] = src[(y / 2) * w + xx / 2];
            }
        }
    }
    out
}

pub fn upsample_nearest_backward<T: Real>(
    dy: &Tensor<T>,
    in_height: usize,
    in_width: usize,
) -> Tensor<T> {
    let (c, h, w) = dy.shape();
    let mut dx = Tensor::zeros(c, in_height, in_width);
    for ch in 0..c {
        let src = dy.channel(ch);
        let dst = dx.channel_mut(ch);
        for y in 0..h {
            for x in 0..w {
                dst[(y / 2) * in_width + x / 2] += src[y * w + x];
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_conv(conv: &Conv2d<f64>, x: &Tensor<f64>) -> Tensor<f64> {
        let (_, h, w) = x.shape();
        let (oh, ow) = conv.output_hw(h, w).unwrap();
        let k = conv.kernel;
        let mut out = Tensor::zeros(conv.out_channels, oh, ow);
        for o in 0..conv.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = conv.bias[o];
                    for ci in 0..conv.in_channels {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * conv.stride + ky) as isize - conv.pad as isize;
                                let ix = (ox * conv.stride + kx) as isize - conv.pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    acc += conv.weight[((o * conv.in_channels + ci) * k + ky) * k + kx]
                                        * x.get(ci, iy as usize, ix as usize);
                                }
                            }
                        }
                    }
                    out.set(o, oy, ox, acc);
                }
            }
        }
        out
    }

    fn random_tensor(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor<f64> {
        Tensor::from_vec(c, h, w, (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn forward_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(k, s, p) in &[(3, 1, 1), (5, 2, 2), (3, 7, 1), (1, 1, 0), (2, 2, 0)] {
            let mut conv = Conv2d::he_normal(2, 3, k, s, p, &mut rng);
            conv.bias = vec![0.1, -0.2, 0.3];
            let x = random_tensor(&mut rng, 2, 9, 11);
            let (y, _) = conv.forward(&x);
            let want = naive_conv(&conv, &x);
            assert_eq!(y.shape(), want.shape());
            for (a, b) in y.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(k, s, p) in &[(3, 2, 1), (1, 1, 0), (3, 1, 1)] {
            let conv = Conv2d::he_normal(2, 2, k, s, p, &mut rng);
            let x = random_tensor(&mut rng, 2, 6, 5);
            let (y, cache) = conv.forward(&x);
            let probe = random_tensor(&mut rng, y.channels(), y.height(), y.width());
            let loss = |c: &Conv2d<f64>, x: &Tensor<f64>| -> f64 {
                let (y, _) = c.forward(x);
                y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
            };
            let mut gw = vec![0.0; conv.weight.len()];
            let mut gb = vec![0.0; conv.bias.len()];
            let dx = conv.backward(&cache, &probe, &mut gw, &mut gb, true).unwrap();
            let h = 1e-6;
            for i in 0..conv.weight.len() {
                let mut cp = conv.clone();
                cp.weight[i] += h;
                let mut cm = conv.clone();
                cm.weight[i] -= h;
                let fd = (loss(&cp, &x) - loss(&cm, &x)) / (2.0 * h);
                assert!((fd - gw[i]).abs() < 1e-6, "weight {i}: {fd} vs {}", gw[i]);
            }
            for i in 0..x.data().len() {
                let mut xp = x.clone();
                xp.data_mut()[i] += h;
                let mut xm = x.clone();
                xm.data_mut()[i] -= h;
                let fd = (loss(&conv, &xp) - loss(&conv, &xm)) / (2.0 * h);
                assert!((fd - dx.data()[i]).abs() < 1e-6);
            }
            for (o, g) in gb.iter().enumerate() {
                let want: f64 = probe.channel(o).iter().sum();
                assert!((want - g).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn upsample_backward_is_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_tensor(&mut rng, 2, 3, 4);
        let y = upsample_nearest(&x, 5, 7);
        let dy = random_tensor(&mut rng, 2, 5, 7);
        let lhs: f64 = y.data().iter().zip(dy.data()).map(|(a, b)| a * b).sum();
        let dx = upsample_nearest_backward(&dy, 3, 4);
        let rhs: f64 = x.data().iter().zip(dx.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_stays_strictly_inside_unit_interval() {
        for v in [-1e4f32, -50.0, 0.0, 50.0, 1e4] {
            let s = sigmoid(v);
            assert!(s > 0.0 && s < 1.0);
        }
        assert_eq!(sigmoid(0.0f64), 0.5);
    }

    #[test]
    fn conv_output_length() {
        assert_eq!(conv_out_len(308, 5, 2, 2), Some(154));
        assert_eq!(conv_out_len(77, 3, 7, 1), Some(11));
        assert_eq!(conv_out_len(2, 5, 1, 0), None);
    }
}
