//! Layer kernels. Every output element is reduced in a fixed order
//! (input channel, kernel row, kernel column) with `f64` accumulators, so
//! results do not depend on how rayon schedules the output channels.

use rayon::prelude::*;

use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;

/// 2-D convolution with "same" padding (`kernel / 2`), stride 1 or 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub out_depth: usize,
    pub in_depth: usize,
    pub kernel: usize,
    pub stride: usize,
    /// `[out][in][ky][kx]`
    pub weight: Vec<f32>,
    pub bias: Option<Vec<f32>>,
}

impl Conv2d {
    pub fn new(
        out_depth: usize,
        in_depth: usize,
        kernel: usize,
        stride: usize,
        weight: Vec<f32>,
        bias: Option<Vec<f32>>,
    ) -> Result<Self> {
        if kernel != 1 && kernel != 3 {
            return Err(Error::shape(format!(
                "unsupported conv kernel {kernel}x{kernel}"
            )));
        }
        if stride != 1 && stride != 2 {
            return Err(Error::shape(format!("unsupported conv stride {stride}")));
        }
        let expected = out_depth * in_depth * kernel * kernel;
        if weight.len() != expected {
            return Err(Error::shape(format!(
                "conv weight has {} values, expected {expected}",
                weight.len()
            )));
        }
        if let Some(b) = &bias {
            if b.len() != out_depth {
                return Err(Error::shape(format!(
                    "conv bias has {} values, expected {out_depth}",
                    b.len()
                )));
            }
        }
        Ok(Self {
            out_depth,
            in_depth,
            kernel,
            stride,
            weight,
            bias,
        })
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        if input.depth != self.in_depth {
            return Err(Error::shape(format!(
                "conv expects input depth {}, got {input}",
                self.in_depth
            )));
        }
        Ok(Shape::new(
            self.out_depth,
            input.height.div_ceil(self.stride),
            input.width.div_ceil(self.stride),
        ))
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.as_ref().map_or(0, Vec::len)
    }
}

pub fn conv2d(input: &Tensor, p: &Conv2d) -> Result<Tensor> {
    let is = input.shape();
    let os = p.output_shape(is)?;
    let (k, s) = (p.kernel, p.stride);
    let pad = (k / 2) as isize;
    let (hi, wi) = (is.height as isize, is.width as isize);
    let (ho, wo) = (os.height, os.width);
    let plane_out = os.plane();
    let mut out = vec![0f32; os.len()];
    if plane_out == 0 {
        return Tensor::from_vec(os, out);
    }

    // Valid output column range for kernel column `kx`.
    let col_range = |kx: usize| -> (usize, usize) {
        let off = kx as isize - pad;
        let lo = if off < 0 { (-off) as usize } else { 0 }.div_ceil(s);
        let hi_excl = if wi - 1 - off < 0 {
            0
        } else {
            ((wi - 1 - off) as usize / s + 1).min(wo)
        };
        (lo.min(hi_excl), hi_excl)
    };

    out.par_chunks_mut(plane_out)
        .enumerate()
        .for_each(|(oc, out_plane)| {
            let mut acc = vec![0f64; plane_out];
            for ic in 0..p.in_depth {
                let in_plane = input.channel(ic);
                for ky in 0..k {
                    for kx in 0..k {
                        let w = p.weight[((oc * p.in_depth + ic) * k + ky) * k + kx] as f64;
                        let (x_lo, x_hi) = col_range(kx);
                        let off_x = kx as isize - pad;
                        for oy in 0..ho {
                            let iy = (oy * s) as isize + ky as isize - pad;
                            if iy < 0 || iy >= hi {
                                continue;
                            }
                            let in_row = &in_plane[iy as usize * is.width..][..is.width];
                            let acc_row = &mut acc[oy * wo..(oy + 1) * wo];
                            if s == 1 {
                                let src = &in_row[(x_lo as isize + off_x) as usize
                                    ..(x_hi as isize + off_x) as usize];
                                for (a, &v) in acc_row[x_lo..x_hi].iter_mut().zip(src) {
                                    *a += w * v as f64;
                                }
                            } else {
                                for ox in x_lo..x_hi {
                                    let ix = (ox * s) as isize + off_x;
                                    acc_row[ox] += w * in_row[ix as usize] as f64;
                                }
                            }
                        }
                    }
                }
            }
            let b = p.bias.as_ref().map_or(0.0, |b| b[oc] as f64);
            for (o, a) in out_plane.iter_mut().zip(&acc) {
                *o = (a + b) as f32;
            }
        });
    let t = Tensor::from_vec(os, out)?;
    t.debug_check_finite();
    Ok(t)
}

/// Transposed convolution with a 2x2 kernel and stride 2: an exact 2x upsample.
#[derive(Debug, Clone, PartialEq)]
pub struct Deconv2d {
    pub out_depth: usize,
    pub in_depth: usize,
    /// `[in][out][dy][dx]`
    pub weight: Vec<f32>,
    pub bias: Option<Vec<f32>>,
}

impl Deconv2d {
    pub fn new(
        out_depth: usize,
        in_depth: usize,
        weight: Vec<f32>,
        bias: Option<Vec<f32>>,
    ) -> Result<Self> {
        let expected = in_depth * out_depth * 4;
        if weight.len() != expected {
            return Err(Error::shape(format!(
                "deconv weight has {} values, expected {expected}",
                weight.len()
            )));
        }
        if bias.as_ref().is_some_and(|b| b.len() != out_depth) {
            return Err(Error::shape("deconv bias length differs from filter count"));
        }
        Ok(Self {
            out_depth,
            in_depth,
            weight,
            bias,
        })
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        if input.depth != self.in_depth {
            return Err(Error::shape(format!(
                "deconv expects input depth {}, got {input}",
                self.in_depth
            )));
        }
        Ok(Shape::new(
            self.out_depth,
            input.height * 2,
            input.width * 2,
        ))
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.as_ref().map_or(0, Vec::len)
    }
}

pub fn deconv2d(input: &Tensor, p: &Deconv2d) -> Result<Tensor> {
    let is = input.shape();
    let os = p.output_shape(is)?;
    let plane_in = is.plane();
    let mut out = vec![0f32; os.len()];
    if plane_in == 0 {
        return Tensor::from_vec(os, out);
    }
    out.par_chunks_mut(os.plane())
        .enumerate()
        .for_each(|(oc, out_plane)| {
            // One accumulator plane per kernel tap.
            let mut acc = vec![0f64; 4 * plane_in];
            for ic in 0..p.in_depth {
                let in_plane = input.channel(ic);
                for tap in 0..4 {
                    let w = p.weight[(ic * p.out_depth + oc) * 4 + tap] as f64;
                    for (a, &v) in acc[tap * plane_in..(tap + 1) * plane_in]
                        .iter_mut()
                        .zip(in_plane)
                    {
                        *a += w * v as f64;
                    }
                }
            }
            let b = p.bias.as_ref().map_or(0.0, |b| b[oc] as f64);
            for y in 0..is.height {
                for x in 0..is.width {
                    for tap in 0..4 {
                        let (dy, dx) = (tap / 2, tap % 2);
                        let v = acc[tap * plane_in + y * is.width + x] + b;
                        out_plane[(2 * y + dy) * os.width + 2 * x + dx] = v as f32;
                    }
                }
            }
        });
    let t = Tensor::from_vec(os, out)?;
    t.debug_check_finite();
    Ok(t)
}

/// Inference-mode batch normalization statistics, one entry per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
}

impl BatchNorm {
    pub fn new(gamma: Vec<f32>, beta: Vec<f32>, mean: Vec<f32>, var: Vec<f32>) -> Result<Self> {
        let n = gamma.len();
        if beta.len() != n || mean.len() != n || var.len() != n {
            return Err(Error::shape("batchnorm arrays differ in length"));
        }
        Ok(Self {
            gamma,
            beta,
            mean,
            var,
        })
    }

    /// γ = 1, β = 0, μ = 0, σ² = 1.
    pub fn identity(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn param_count(&self) -> usize {
        4 * self.channels()
    }
}

/// `y = max(0, γ(x − μ)/sqrt(σ² + ε) + β)` per channel.
pub fn batchnorm_relu(mut input: Tensor, p: &BatchNorm) -> Result<Tensor> {
    let s = input.shape();
    if s.depth != p.channels() {
        return Err(Error::shape(format!(
            "batchnorm has {} channels, input is {s}",
            p.channels()
        )));
    }
    if s.plane() > 0 {
        input
            .data_mut()
            .par_chunks_mut(s.plane())
            .enumerate()
            .for_each(|(c, plane)| {
                let scale = p.gamma[c] as f64 / (p.var[c] as f64 + BN_EPS).sqrt();
                let (mu, beta) = (p.mean[c] as f64, p.beta[c] as f64);
                for v in plane {
                    *v = (scale * (*v as f64 - mu) + beta).max(0.0) as f32;
                }
            });
    }
    Ok(input)
}

/// 2x2 max pooling with stride 2.
pub fn maxpool2(input: &Tensor) -> Result<Tensor> {
    let s = input.shape();
    if !s.height.is_multiple_of(2) || !s.width.is_multiple_of(2) {
        return Err(Error::shape(format!(
            "maxpool2 needs even spatial dims, got {s}"
        )));
    }
    let os = Shape::new(s.depth, s.height / 2, s.width / 2);
    let mut out = Tensor::zeros(os);
    for c in 0..s.depth {
        let src = input.channel(c);
        let dst = out.channel_mut(c);
        for y in 0..os.height {
            let r0 = &src[2 * y * s.width..][..s.width];
            let r1 = &src[(2 * y + 1) * s.width..][..s.width];
            for x in 0..os.width {
                dst[y * os.width + x] = r0[2 * x]
                    .max(r0[2 * x + 1])
                    .max(r1[2 * x])
                    .max(r1[2 * x + 1]);
            }
        }
    }
    Ok(out)
}

/// 3x3 average pooling, stride 1, averaging only taps that fall inside the input.
pub fn avgpool3(input: &Tensor) -> Tensor {
    let s = input.shape();
    let mut out = Tensor::zeros(s);
    let (h, w) = (s.height as isize, s.width as isize);
    for c in 0..s.depth {
        let src = input.channel(c);
        let dst = out.channel_mut(c);
        for y in 0..h {
            for x in 0..w {
                let mut sum = 0f64;
                let mut n = 0u32;
                for yy in (y - 1).max(0)..=(y + 1).min(h - 1) {
                    for xx in (x - 1).max(0)..=(x + 1).min(w - 1) {
                        sum += src[(yy * w + xx) as usize] as f64;
                        n += 1;
                    }
                }
                dst[(y * w + x) as usize] = (sum / n as f64) as f32;
            }
        }
    }
    out
}

/// Stacks `b` after `a` along depth.
pub fn concat_depth(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.height != sb.height || sa.width != sb.width {
        return Err(Error::shape(format!("cannot concat {sa} with {sb}")));
    }
    let mut data = Vec::with_capacity(sa.len() + sb.len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::from_vec(Shape::new(sa.depth + sb.depth, sa.height, sa.width), data)
}

/// Per-pixel softmax over channels, stabilized by subtracting the channel maximum.
pub fn softmax_channels(input: &Tensor) -> Tensor {
    let s = input.shape();
    let plane = s.plane();
    let mut out = Tensor::zeros(s);
    let mut buf = vec![0f64; s.depth];
    for p in 0..plane {
        let max = (0..s.depth)
            .map(|c| input.data()[c * plane + p])
            .fold(f32::NEG_INFINITY, f32::max) as f64;
        let mut sum = 0.0;
        for (c, e) in buf.iter_mut().enumerate() {
            *e = (input.data()[c * plane + p] as f64 - max).exp();
            sum += *e;
        }
        for (c, e) in buf.iter().enumerate() {
            out.data_mut()[c * plane + p] = (e / sum) as f32;
        }
    }
    out
}
