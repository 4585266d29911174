use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gemm::gemm;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Convolution geometry used by the Siamese branch: 5x5 filters, stride 1,
/// padding 1.
pub const CONV_KERNEL: usize = 5;
pub const CONV_STRIDE: usize = 1;
pub const CONV_PADDING: usize = 1;

/// One entry of a layer stack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Dense {
        in_features: usize,
        out_features: usize,
    },
    Relu,
    Tanh,
    Sigmoid,
    /// Softmax over the flattened per-item values.
    Softmax,
    MaxPool {
        size: usize,
    },
    AvgPool {
        size: usize,
    },
}

impl LayerSpec {
    /// 5x5 / stride 1 / padding 1 convolution.
    pub fn conv(in_channels: usize, out_channels: usize) -> Self {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel: CONV_KERNEL,
            stride: CONV_STRIDE,
            padding: CONV_PADDING,
        }
    }

    /// 5x5 / stride 1 convolution with explicit padding.
    pub fn conv_padded(in_channels: usize, out_channels: usize, padding: usize) -> Self {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel: CONV_KERNEL,
            stride: CONV_STRIDE,
            padding,
        }
    }

    pub fn dense(in_features: usize, out_features: usize) -> Self {
        LayerSpec::Dense {
            in_features,
            out_features,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Relu => "relu",
            LayerSpec::Tanh => "tanh",
            LayerSpec::Sigmoid => "sigmoid",
            LayerSpec::Softmax => "softmax",
            LayerSpec::MaxPool { .. } => "max_pool",
            LayerSpec::AvgPool { .. } => "avg_pool",
        }
    }

    /// Per-item output shape for a per-item input shape. This is the single
    /// shape function used by both construction-time validation and forward.
    pub fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>> {
        let fail = |detail: String| Error::Shape {
            layer: index,
            kind: self.kind(),
            detail,
        };
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let &[c, h, w] = input else {
                    return Err(fail(format!("expected [C, H, W] input, got {input:?}")));
                };
                if c != in_channels {
                    return Err(fail(format!("expected {in_channels} channels, got {c}")));
                }
                if stride == 0 || kernel == 0 {
                    return Err(fail("kernel and stride must be positive".into()));
                }
                if h + 2 * padding < kernel || w + 2 * padding < kernel {
                    return Err(fail(format!("input {h}x{w} smaller than kernel {kernel}")));
                }
                Ok(vec![
                    out_channels,
                    (h + 2 * padding - kernel) / stride + 1,
                    (w + 2 * padding - kernel) / stride + 1,
                ])
            }
            LayerSpec::Dense {
                in_features,
                out_features,
            } => {
                let n: usize = input.iter().product();
                if n != in_features {
                    return Err(fail(format!(
                        "expected {in_features} features, got {n} from {input:?}"
                    )));
                }
                Ok(vec![out_features])
            }
            LayerSpec::MaxPool { size } | LayerSpec::AvgPool { size } => {
                let &[c, h, w] = input else {
                    return Err(fail(format!("expected [C, H, W] input, got {input:?}")));
                };
                if size == 0 || h < size || w < size {
                    return Err(fail(format!("pool {size} does not fit {h}x{w}")));
                }
                Ok(vec![c, h / size, w / size])
            }
            LayerSpec::Relu | LayerSpec::Tanh | LayerSpec::Sigmoid | LayerSpec::Softmax => {
                Ok(input.to_vec())
            }
        }
    }

    pub fn fan_in_out(&self) -> Option<(usize, usize)> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => Some((
                in_channels * kernel * kernel,
                out_channels * kernel * kernel,
            )),
            LayerSpec::Dense {
                in_features,
                out_features,
            } => Some((in_features, out_features)),
            _ => None,
        }
    }
}

/// Everything backward needs from the most recent recorded forward.
#[derive(Clone, Debug)]
enum Cache {
    Conv { cols: Vec<f64>, in_shape: Vec<usize> },
    Dense { input: Vec<f64>, in_shape: Vec<usize> },
    Mask { mask: Vec<bool> },
    Output { output: Vec<f64> },
    Argmax { index: Vec<usize>, in_shape: Vec<usize> },
    Avg { in_shape: Vec<usize> },
}

/// A layer instance: spec, parameters (weight then bias) and the tape entry.
#[derive(Clone, Debug)]
pub struct Layer {
    spec: LayerSpec,
    in_shape: Vec<usize>,
    out_shape: Vec<usize>,
    params: Vec<Tensor>,
    cache: Option<Cache>,
    branch: u64,
}

impl Layer {
    /// Build a layer for a given per-item input shape with Glorot-uniform
    /// weights and zero bias.
    pub fn new<R: Rng>(spec: LayerSpec, index: usize, in_shape: &[usize], rng: &mut R) -> Result<Self> {
        let out_shape = spec.output_shape(index, in_shape)?;
        let params = match spec {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => {
                let (fi, fo) = spec.fan_in_out().unwrap_or((1, 1));
                let bound = (6.0 / (fi + fo) as f64).sqrt();
                let n = out_channels * in_channels * kernel * kernel;
                let w = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
                vec![
                    Tensor::parameter(&[out_channels, in_channels, kernel, kernel], w)?,
                    Tensor::parameter(&[out_channels], vec![0.0; out_channels])?,
                ]
            }
            LayerSpec::Dense {
                in_features,
                out_features,
            } => {
                let bound = (6.0 / (in_features + out_features) as f64).sqrt();
                let w = (0..in_features * out_features)
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect();
                vec![
                    Tensor::parameter(&[out_features, in_features], w)?,
                    Tensor::parameter(&[out_features], vec![0.0; out_features])?,
                ]
            }
            _ => Vec::new(),
        };
        Ok(Self {
            spec,
            in_shape: in_shape.to_vec(),
            out_shape,
            params,
            cache: None,
            branch: 0,
        })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn out_shape(&self) -> &[usize] {
        &self.out_shape
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub(crate) fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    pub(crate) fn clear_cache(&mut self) {
        self.cache = None;
    }

    /// Hash of the piecewise branch taken (relu masks, pooling winners).
    pub(crate) fn branch_signature(&self) -> u64 {
        self.branch
    }

    pub fn forward(&mut self, index: usize, x: &Tensor, record: bool) -> Result<Tensor> {
        let item_shape = &x.shape()[1..];
        let expected = self.spec.output_shape(index, item_shape)?;
        if item_shape != self.in_shape.as_slice() {
            return Err(Error::Shape {
                layer: index,
                kind: self.spec.kind(),
                detail: format!("built for {:?}, got {item_shape:?}", self.in_shape),
            });
        }
        let n = x.batch();
        let mut out_shape = vec![n];
        out_shape.extend_from_slice(&expected);
        let out_len: usize = expected.iter().product();
        let mut out = vec![0.0; n * out_len];

        match self.spec {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let (h, w) = (self.in_shape[1], self.in_shape[2]);
                let (oh, ow) = (expected[1], expected[2]);
                let k = in_channels * kernel * kernel;
                let p = oh * ow;
                let mut cols = vec![0.0; n * k * p];
                let in_len = x.item_len();
                for b in 0..n {
                    let col = &mut cols[b * k * p..(b + 1) * k * p];
                    im2col(
                        &x.data()[b * in_len..(b + 1) * in_len],
                        in_channels,
                        h,
                        w,
                        kernel,
                        stride,
                        padding,
                        oh,
                        ow,
                        col,
                    );
                    let o = &mut out[b * out_len..(b + 1) * out_len];
                    let bias = self.params[1].data();
                    for (oc, row) in o.chunks_mut(p).enumerate() {
                        row.iter_mut().for_each(|v| *v = bias[oc]);
                    }
                    gemm(out_channels, k, p, self.params[0].data(), false, col, false, o, 1.0);
                }
                if record {
                    self.cache = Some(Cache::Conv {
                        cols,
                        in_shape: x.shape().to_vec(),
                    });
                }
            }
            LayerSpec::Dense {
                in_features,
                out_features,
            } => {
                let bias = self.params[1].data();
                for row in out.chunks_mut(out_features) {
                    row.copy_from_slice(bias);
                }
                gemm(n, in_features, out_features, x.data(), false, self.params[0].data(), true, &mut out, 1.0);
                if record {
                    self.cache = Some(Cache::Dense {
                        input: x.data().to_vec(),
                        in_shape: x.shape().to_vec(),
                    });
                }
            }
            LayerSpec::Relu => {
                let mask: Vec<bool> = x.data().iter().map(|&v| v > 0.0).collect();
                for ((o, &v), &m) in out.iter_mut().zip(x.data()).zip(&mask) {
                    *o = if m { v } else { 0.0 };
                }
                self.branch = hash_bools(&mask);
                if record {
                    self.cache = Some(Cache::Mask { mask });
                }
            }
            LayerSpec::Tanh => {
                for (o, &v) in out.iter_mut().zip(x.data()) {
                    *o = v.tanh();
                }
                if record {
                    self.cache = Some(Cache::Output { output: out.clone() });
                }
            }
            LayerSpec::Sigmoid => {
                for (o, &v) in out.iter_mut().zip(x.data()) {
                    *o = sigmoid(v);
                }
                if record {
                    self.cache = Some(Cache::Output { output: out.clone() });
                }
            }
            LayerSpec::Softmax => {
                for (o, xi) in out.chunks_mut(out_len).zip(x.data().chunks(out_len)) {
                    softmax_into(xi, o);
                }
                if record {
                    self.cache = Some(Cache::Output { output: out.clone() });
                }
            }
            LayerSpec::MaxPool { size } => {
                let (c, h, w) = (self.in_shape[0], self.in_shape[1], self.in_shape[2]);
                let (oh, ow) = (expected[1], expected[2]);
                let mut index = vec![0usize; out.len()];
                let in_len = c * h * w;
                for b in 0..n {
                    let xi = &x.data()[b * in_len..(b + 1) * in_len];
                    for ch in 0..c {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let mut best = f64::NEG_INFINITY;
                                let mut best_i = 0;
                                for dy in 0..size {
                                    for dx in 0..size {
                                        let i = ch * h * w + (oy * size + dy) * w + ox * size + dx;
                                        if xi[i] > best {
                                            best = xi[i];
                                            best_i = i;
                                        }
                                    }
                                }
                                let o = b * out_len + ch * oh * ow + oy * ow + ox;
                                out[o] = best;
                                index[o] = b * in_len + best_i;
                            }
                        }
                    }
                }
                let mut hasher = DefaultHasher::new();
                index.hash(&mut hasher);
                self.branch = hasher.finish();
                if record {
                    self.cache = Some(Cache::Argmax {
                        index,
                        in_shape: x.shape().to_vec(),
                    });
                }
            }
            LayerSpec::AvgPool { size } => {
                let (c, h, w) = (self.in_shape[0], self.in_shape[1], self.in_shape[2]);
                let (oh, ow) = (expected[1], expected[2]);
                let in_len = c * h * w;
                let scale = 1.0 / (size * size) as f64;
                for b in 0..n {
                    let xi = &x.data()[b * in_len..(b + 1) * in_len];
                    for ch in 0..c {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let mut s = 0.0;
                                for dy in 0..size {
                                    let row = ch * h * w + (oy * size + dy) * w + ox * size;
                                    s += xi[row..row + size].iter().sum::<f64>();
                                }
                                out[b * out_len + ch * oh * ow + oy * ow + ox] = s * scale;
                            }
                        }
                    }
                }
                if record {
                    self.cache = Some(Cache::Avg {
                        in_shape: x.shape().to_vec(),
                    });
                }
            }
        }
        Tensor::from_vec(&out_shape, out)
    }

    /// Accumulate parameter gradients and return the gradient w.r.t. the
    /// recorded input. Consumes the tape entry.
    pub fn backward(&mut self, index: usize, grad_out: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or_else(|| {
            Error::State(format!(
                "backward through layer {index} ({}) without a recorded forward",
                self.spec.kind()
            ))
        })?;
        let n = grad_out.batch();
        let gout = grad_out.data();
        match (&self.spec, cache) {
            (
                &LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                },
                Cache::Conv { cols, in_shape },
            ) => {
                let (h, w) = (in_shape[2], in_shape[3]);
                let (oh, ow) = (self.out_shape[1], self.out_shape[2]);
                let k = in_channels * kernel * kernel;
                let p = oh * ow;
                let out_len = out_channels * p;
                let in_len = in_channels * h * w;
                let mut dx = vec![0.0; n * in_len];
                let mut dcol = vec![0.0; k * p];
                for b in 0..n {
                    let g = &gout[b * out_len..(b + 1) * out_len];
                    let col = &cols[b * k * p..(b + 1) * k * p];
                    {
                        let (wp, bp) = self.params.split_at_mut(1);
                        gemm(out_channels, p, k, g, false, col, true, wp[0].grad_mut(), 1.0);
                        let db = bp[0].grad_mut();
                        for (oc, row) in g.chunks(p).enumerate() {
                            db[oc] += row.iter().sum::<f64>();
                        }
                    }
                    gemm(k, out_channels, p, self.params[0].data(), true, g, false, &mut dcol, 0.0);
                    col2im(
                        &dcol,
                        in_channels,
                        h,
                        w,
                        kernel,
                        stride,
                        padding,
                        oh,
                        ow,
                        &mut dx[b * in_len..(b + 1) * in_len],
                    );
                }
                Tensor::from_vec(&in_shape, dx)
            }
            (
                &LayerSpec::Dense {
                    in_features,
                    out_features,
                },
                Cache::Dense { input, in_shape },
            ) => {
                {
                    let (wp, bp) = self.params.split_at_mut(1);
                    gemm(out_features, n, in_features, gout, true, &input, false, wp[0].grad_mut(), 1.0);
                    let db = bp[0].grad_mut();
                    for row in gout.chunks(out_features) {
                        for (d, g) in db.iter_mut().zip(row) {
                            *d += g;
                        }
                    }
                }
                let mut dx = vec![0.0; n * in_features];
                gemm(n, out_features, in_features, gout, false, self.params[0].data(), false, &mut dx, 0.0);
                Tensor::from_vec(&in_shape, dx)
            }
            (LayerSpec::Relu, Cache::Mask { mask }) => {
                let dx = gout
                    .iter()
                    .zip(&mask)
                    .map(|(&g, &m)| if m { g } else { 0.0 })
                    .collect();
                Tensor::from_vec(grad_out.shape(), dx)
            }
            (LayerSpec::Tanh, Cache::Output { output }) => {
                let dx = gout
                    .iter()
                    .zip(&output)
                    .map(|(&g, &y)| g * (1.0 - y * y))
                    .collect();
                Tensor::from_vec(grad_out.shape(), dx)
            }
            (LayerSpec::Sigmoid, Cache::Output { output }) => {
                let dx = gout
                    .iter()
                    .zip(&output)
                    .map(|(&g, &y)| g * y * (1.0 - y))
                    .collect();
                Tensor::from_vec(grad_out.shape(), dx)
            }
            (LayerSpec::Softmax, Cache::Output { output }) => {
                let len = grad_out.item_len();
                let mut dx = vec![0.0; gout.len()];
                for ((d, g), y) in dx.chunks_mut(len).zip(gout.chunks(len)).zip(output.chunks(len)) {
                    let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                    for i in 0..len {
                        d[i] = y[i] * (g[i] - dot);
                    }
                }
                Tensor::from_vec(grad_out.shape(), dx)
            }
            (LayerSpec::MaxPool { .. }, Cache::Argmax { index, in_shape }) => {
                let total: usize = in_shape.iter().product();
                let mut dx = vec![0.0; total];
                for (&i, &g) in index.iter().zip(gout) {
                    dx[i] += g;
                }
                Tensor::from_vec(&in_shape, dx)
            }
            (&LayerSpec::AvgPool { size }, Cache::Avg { in_shape }) => {
                let (c, h, w) = (in_shape[1], in_shape[2], in_shape[3]);
                let (oh, ow) = (self.out_shape[1], self.out_shape[2]);
                let in_len = c * h * w;
                let out_len = c * oh * ow;
                let scale = 1.0 / (size * size) as f64;
                let mut dx = vec![0.0; n * in_len];
                for b in 0..n {
                    for ch in 0..c {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let g = gout[b * out_len + ch * oh * ow + oy * ow + ox] * scale;
                                for dy in 0..size {
                                    let row = b * in_len + ch * h * w + (oy * size + dy) * w + ox * size;
                                    dx[row..row + size].iter_mut().for_each(|v| *v += g);
                                }
                            }
                        }
                    }
                }
                Tensor::from_vec(&in_shape, dx)
            }
            (spec, _) => Err(Error::State(format!(
                "tape entry does not match layer {index} ({})",
                spec.kind()
            ))),
        }
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_into(x: &[f64], out: &mut [f64]) {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - max).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
}

fn hash_bools(mask: &[bool]) -> u64 {
    let mut hasher = DefaultHasher::new();
    mask.hash(&mut hasher);
    hasher.finish()
}

#[allow(clippy::too_many_arguments)]
fn im2col(
    x: &[f64],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    col: &mut [f64],
) {
    let p = oh * ow;
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let dst = &mut col[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    let d = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        d.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let src = &x[ch * h * w + iy as usize * w..ch * h * w + (iy as usize + 1) * w];
                    for (ox, v) in d.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        *v = if ix < 0 || ix >= w as isize { 0.0 } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im(
    col: &[f64],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    dx: &mut [f64],
) {
    let p = oh * ow;
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let src = &col[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let base = ch * h * w + iy as usize * w;
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && (ix as usize) < w {
                            dx[base + ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct sliding-window convolution, used as the size and value oracle.
    fn brute_conv(x: &[f64], c: usize, h: usize, w: usize, wt: &[f64], oc: usize, k: usize, pad: usize) -> (usize, usize, Vec<f64>) {
        let mut oh = 0;
        while oh * 1 + k <= h + 2 * pad {
            oh += 1;
        }
        let mut ow = 0;
        while ow + k <= w + 2 * pad {
            ow += 1;
        }
        let mut out = vec![0.0; oc * oh * ow];
        for o in 0..oc {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut s = 0.0;
                    for ch in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = y as isize + ky as isize - pad as isize;
                                let ix = xx as isize + kx as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    s += x[ch * h * w + iy as usize * w + ix as usize]
                                        * wt[((o * c + ch) * k + ky) * k + kx];
                                }
                            }
                        }
                    }
                    out[(o * oh + y) * ow + xx] = s;
                }
            }
        }
        (oh, ow, out)
    }

    #[test]
    fn conv_size_on_96_input_is_94() {
        let spec = LayerSpec::conv(3, 2);
        assert_eq!(spec.output_shape(0, &[3, 96, 96]).unwrap(), vec![2, 94, 94]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut layer = Layer::new(spec, 0, &[3, 96, 96], &mut rng).unwrap();
        let x: Vec<f64> = (0..3 * 96 * 96).map(|i| ((i * 7919) % 101) as f64 / 101.0).collect();
        let t = Tensor::from_vec(&[1, 3, 96, 96], x.clone()).unwrap();
        let y = layer.forward(0, &t, false).unwrap();
        let (oh, ow, want) = brute_conv(&x, 3, 96, 96, layer.params()[0].data(), 2, 5, 1);
        assert_eq!((oh, ow), (94, 94));
        assert_eq!(y.shape(), &[1, 2, 94, 94]);
        for (a, b) in y.data().iter().zip(&want) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn shape_mismatch_names_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut layer = Layer::new(LayerSpec::dense(4, 2), 3, &[4], &mut rng).unwrap();
        let err = layer.forward(3, &Tensor::zeros(&[1, 5]), false).unwrap_err();
        match err {
            Error::Shape { layer, kind, .. } => {
                assert_eq!(layer, 3);
                assert_eq!(kind, "dense");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn maxpool_routes_gradient_to_winner() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut layer = Layer::new(LayerSpec::MaxPool { size: 2 }, 0, &[1, 2, 2], &mut rng).unwrap();
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![0.1, 0.9, -0.3, 0.2]).unwrap();
        let y = layer.forward(0, &x, true).unwrap();
        assert_eq!(y.data(), &[0.9]);
        let dx = layer.backward(0, &Tensor::from_vec(&[1, 1, 1, 1], vec![2.0]).unwrap()).unwrap();
        assert_eq!(dx.data(), &[0.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut out = [0.0; 3];
        softmax_into(&[1000.0, 1001.0, -5.0], &mut out);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(out[1] > out[0]);
    }
}
