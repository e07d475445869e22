use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{matmul, Activation, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Linear,
    Conv2d,
    Deconv2d,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Linear => "linear",
            LayerKind::Conv2d => "conv2d",
            LayerKind::Deconv2d => "deconv2d",
        }
    }
}

impl std::fmt::Display for LayerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LayerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(LayerKind::Linear),
            "conv2d" => Ok(LayerKind::Conv2d),
            "deconv2d" => Ok(LayerKind::Deconv2d),
            other => Err(Error::invalid(format!("unknown layer kind '{other}'"))),
        }
    }
}

/// Spatial geometry shared by convolution and transposed convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub output_padding: usize,
}

impl ConvGeometry {
    /// Stride 2, padding `k / 2`: odd kernels map `h` to `ceil(h / 2)`.
    pub fn halving(in_channels: usize, out_channels: usize, in_h: usize, in_w: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            in_h,
            in_w,
            kernel,
            stride: 2,
            padding: kernel / 2,
            output_padding: 0,
        }
    }

    /// Stride 2 transposed convolution whose output is exactly `2h × 2w`.
    pub fn doubling(in_channels: usize, out_channels: usize, in_h: usize, in_w: usize, kernel: usize) -> Self {
        // (h - 1)·2 - 2p + k + op = 2h  ⇔  2p - op = k - 2
        let (padding, output_padding) = if kernel % 2 == 1 {
            ((kernel - 1) / 2, 1)
        } else {
            ((kernel - 2) / 2, 0)
        };
        Self {
            in_channels,
            out_channels,
            in_h,
            in_w,
            kernel,
            stride: 2,
            padding,
            output_padding,
        }
    }

    fn conv_out(&self) -> Option<(usize, usize)> {
        let dim = |x: usize| {
            let padded = x + 2 * self.padding;
            (padded >= self.kernel).then(|| (padded - self.kernel) / self.stride + 1)
        };
        Some((dim(self.in_h)?, dim(self.in_w)?))
    }

    fn deconv_out(&self) -> Option<(usize, usize)> {
        let dim = |x: usize| {
            let full = (x - 1) * self.stride + self.kernel + self.output_padding;
            full.checked_sub(2 * self.padding).filter(|&v| v > 0)
        };
        Some((dim(self.in_h)?, dim(self.in_w)?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    Linear { in_features: usize, out_features: usize },
    Conv2d(ConvGeometry),
    Deconv2d(ConvGeometry),
}

impl Geometry {
    pub fn kind(&self) -> LayerKind {
        match self {
            Geometry::Linear { .. } => LayerKind::Linear,
            Geometry::Conv2d(_) => LayerKind::Conv2d,
            Geometry::Deconv2d(_) => LayerKind::Deconv2d,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Geometry::Linear {
                in_features,
                out_features,
            } => {
                if *in_features == 0 || *out_features == 0 {
                    return Err(Error::invalid("linear layer with zero features"));
                }
            }
            Geometry::Conv2d(g) | Geometry::Deconv2d(g) => {
                if g.in_channels == 0 || g.out_channels == 0 || g.kernel == 0 || g.stride == 0 {
                    return Err(Error::invalid(format!("degenerate convolution geometry {g:?}")));
                }
                if g.in_h == 0 || g.in_w == 0 {
                    return Err(Error::invalid("convolution over empty spatial input"));
                }
                if matches!(self, Geometry::Deconv2d(_)) && g.output_padding >= g.stride {
                    return Err(Error::invalid("output padding must be smaller than stride"));
                }
                let out = match self {
                    Geometry::Conv2d(_) => g.conv_out(),
                    _ => g.deconv_out(),
                };
                if out.is_none() {
                    return Err(Error::invalid(format!("geometry {g:?} yields an empty output")));
                }
            }
        }
        Ok(())
    }

    /// Per-sample input shape.
    pub fn input_shape(&self) -> Vec<usize> {
        match self {
            Geometry::Linear { in_features, .. } => vec![*in_features],
            Geometry::Conv2d(g) | Geometry::Deconv2d(g) => vec![g.in_channels, g.in_h, g.in_w],
        }
    }

    /// Per-sample output shape predicted from geometry alone.
    pub fn output_shape(&self) -> Vec<usize> {
        match self {
            Geometry::Linear { out_features, .. } => vec![*out_features],
            Geometry::Conv2d(g) => {
                let (h, w) = g.conv_out().unwrap_or((0, 0));
                vec![g.out_channels, h, w]
            }
            Geometry::Deconv2d(g) => {
                let (h, w) = g.deconv_out().unwrap_or((0, 0));
                vec![g.out_channels, h, w]
            }
        }
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        match self {
            Geometry::Linear {
                in_features,
                out_features,
            } => vec![*out_features, *in_features],
            Geometry::Conv2d(g) | Geometry::Deconv2d(g) => {
                vec![g.out_channels, g.in_channels, g.kernel, g.kernel]
            }
        }
    }

    pub fn bias_len(&self) -> usize {
        match self {
            Geometry::Linear { out_features, .. } => *out_features,
            Geometry::Conv2d(g) | Geometry::Deconv2d(g) => g.out_channels,
        }
    }

    fn fans(&self) -> (usize, usize) {
        match self {
            Geometry::Linear {
                in_features,
                out_features,
            } => (*in_features, *out_features),
            Geometry::Conv2d(g) | Geometry::Deconv2d(g) => {
                let kk = g.kernel * g.kernel;
                (g.in_channels * kk, g.out_channels * kk)
            }
        }
    }
}

/// One concrete layer: affine map (dense, convolution or transposed
/// convolution) followed by an elementwise activation.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T: Scalar = f32> {
    pub geometry: Geometry,
    pub activation: Activation,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Gradients produced by [`Layer::backward`]. Parameter gradients are absent
/// when only the input gradient was requested.
#[derive(Clone, Debug)]
pub struct LayerGrads<T: Scalar = f32> {
    pub input: Tensor<T>,
    pub weight: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

impl<T: Scalar> Layer<T> {
    pub fn zeroed(geometry: Geometry, activation: Activation) -> Result<Self> {
        geometry.validate()?;
        Ok(Self {
            weight: Tensor::zeros(&geometry.weight_shape()),
            bias: Tensor::zeros(&[geometry.bias_len()]),
            geometry,
            activation,
        })
    }

    /// Kaiming-uniform (fan-in) for ReLU-family activations, Xavier-uniform
    /// otherwise; biases start at zero.
    pub fn init<R: Rng + ?Sized>(geometry: Geometry, activation: Activation, rng: &mut R) -> Result<Self> {
        let mut layer = Self::zeroed(geometry, activation)?;
        let (fan_in, fan_out) = geometry.fans();
        let bound = if activation.is_relu_family() {
            (6.0 / fan_in as f64).sqrt()
        } else {
            (6.0 / (fan_in + fan_out) as f64).sqrt()
        };
        for w in layer.weight.data_mut() {
            *w = T::from_f64(rng.random_range(-bound..bound));
        }
        Ok(layer)
    }

    pub fn kind(&self) -> LayerKind {
        self.geometry.kind()
    }

    pub fn input_shape(&self) -> Vec<usize> {
        self.geometry.input_shape()
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.geometry.output_shape()
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn check_batch(&self, input: &Tensor<T>, per_sample: &[usize]) -> Result<usize> {
        let want: usize = per_sample.iter().product();
        let n = input.batch();
        if input.shape().len() < 2 || input.sample_len() != want || n == 0 {
            let mut expected = vec![n.max(1)];
            expected.extend_from_slice(per_sample);
            return Err(Error::shape(&expected, input.shape()));
        }
        Ok(n)
    }

    /// Forward pass over a batch `[n, ...]`. Inputs whose per-sample element
    /// count matches the layer are reinterpreted (flatten / unflatten).
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let n = self.check_batch(input, &self.input_shape())?;
        let mut pre = match &self.geometry {
            Geometry::Linear {
                in_features,
                out_features,
            } => {
                let mut out = vec![T::zero(); n * out_features];
                matmul(
                    input.data(),
                    false,
                    self.weight.data(),
                    true,
                    &mut out,
                    n,
                    *in_features,
                    *out_features,
                    false,
                );
                for row in out.chunks_exact_mut(*out_features) {
                    for (o, &b) in row.iter_mut().zip(self.bias.data()) {
                        *o = *o + b;
                    }
                }
                out
            }
            Geometry::Conv2d(g) => conv_forward(g, input.data(), n, self.weight.data(), self.bias.data()),
            Geometry::Deconv2d(g) => deconv_forward(g, input.data(), n, self.weight.data(), self.bias.data()),
        };
        let act = self.activation;
        if act != Activation::None {
            for v in &mut pre {
                *v = act.apply(*v);
            }
        }
        let mut shape = vec![n];
        shape.extend(self.output_shape());
        Tensor::new(shape, pre)
    }

    /// Exact gradients given the forward input, the forward output and the
    /// gradient of the loss with respect to that output.
    pub fn backward(
        &self,
        input: &Tensor<T>,
        output: &Tensor<T>,
        upstream: &Tensor<T>,
        param_grads: bool,
    ) -> Result<LayerGrads<T>> {
        let n = self.check_batch(input, &self.input_shape())?;
        let out_shape = self.output_shape();
        let mut full_out = vec![n];
        full_out.extend(&out_shape);
        if upstream.shape() != full_out.as_slice() {
            return Err(Error::shape(&full_out, upstream.shape()));
        }
        if output.shape() != full_out.as_slice() {
            return Err(Error::shape(&full_out, output.shape()));
        }

        let act = self.activation;
        let dz: Vec<T> = upstream
            .data()
            .iter()
            .zip(output.data())
            .map(|(&u, &y)| u * act.derivative_from_output(y))
            .collect();

        let (dx, params) = match &self.geometry {
            Geometry::Linear {
                in_features,
                out_features,
            } => {
                let (fi, fo) = (*in_features, *out_features);
                let mut dx = vec![T::zero(); n * fi];
                matmul(&dz, false, self.weight.data(), false, &mut dx, n, fo, fi, false);
                let params = param_grads.then(|| {
                    let mut dw = vec![T::zero(); fo * fi];
                    matmul(&dz, true, input.data(), false, &mut dw, fo, n, fi, false);
                    let mut db = vec![T::zero(); fo];
                    for row in dz.chunks_exact(fo) {
                        for (b, &d) in db.iter_mut().zip(row) {
                            *b = *b + d;
                        }
                    }
                    (dw, db)
                });
                (dx, params)
            }
            Geometry::Conv2d(g) => conv_backward(g, input.data(), n, self.weight.data(), &dz, param_grads),
            Geometry::Deconv2d(g) => deconv_backward(g, input.data(), n, self.weight.data(), &dz, param_grads),
        };
        let (dw, db) = params.unzip();

        Ok(LayerGrads {
            input: Tensor::new(input.shape().to_vec(), dx)?,
            weight: dw
                .map(|w| Tensor::new(self.geometry.weight_shape(), w))
                .transpose()?,
            bias: db.map(|b| Tensor::new(vec![self.geometry.bias_len()], b)).transpose()?,
        })
    }
}

/// Input gradient plus optional (weight, bias) gradients.
type RawGrads<T> = (Vec<T>, Option<(Vec<T>, Vec<T>)>);

/// Unfolds `x: [n, c, h, w]` into columns `[c·k·k, n·oh·ow]` for a sliding
/// window of size `k`, stride `s`, padding `p` over an `oh × ow` output grid.
#[allow(clippy::too_many_arguments)]
fn im2col<T: Scalar>(
    x: &[T],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    p: usize,
    oh: usize,
    ow: usize,
) -> Vec<T> {
    let cols_n = n * oh * ow;
    let mut cols = vec![T::zero(); c * k * k * cols_n];
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * cols_n..(row + 1) * cols_n];
                for b in 0..n {
                    let src = &x[(b * c + ci) * h * w..(b * c + ci + 1) * h * w];
                    for oy in 0..oh {
                        let iy = (oy * s + ky) as isize - p as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let iy = iy as usize;
                        let base = (b * oh + oy) * ow;
                        for ox in 0..ow {
                            let ix = (ox * s + kx) as isize - p as isize;
                            if ix >= 0 && (ix as usize) < w {
                                dst[base + ox] = src[iy * w + ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-adds columns back onto `[n, c, h, w]`.
#[allow(clippy::too_many_arguments)]
fn col2im<T: Scalar>(
    cols: &[T],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    p: usize,
    oh: usize,
    ow: usize,
) -> Vec<T> {
    let cols_n = n * oh * ow;
    let mut x = vec![T::zero(); n * c * h * w];
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * cols_n..(row + 1) * cols_n];
                for b in 0..n {
                    let dst = &mut x[(b * c + ci) * h * w..(b * c + ci + 1) * h * w];
                    for oy in 0..oh {
                        let iy = (oy * s + ky) as isize - p as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let iy = iy as usize;
                        let base = (b * oh + oy) * ow;
                        for ox in 0..ow {
                            let ix = (ox * s + kx) as isize - p as isize;
                            if ix >= 0 && (ix as usize) < w {
                                let d = &mut dst[iy * w + ix as usize];
                                *d = *d + src[base + ox];
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

/// `[n, c, m]` → `[c, n·m]`.
fn batch_to_channel_major<T: Scalar>(x: &[T], n: usize, c: usize, m: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for b in 0..n {
        for ch in 0..c {
            let src = &x[(b * c + ch) * m..(b * c + ch + 1) * m];
            out[ch * n * m + b * m..ch * n * m + (b + 1) * m].copy_from_slice(src);
        }
    }
    out
}

/// `[c, n·m]` → `[n, c, m]`.
fn channel_to_batch_major<T: Scalar>(x: &[T], n: usize, c: usize, m: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for ch in 0..c {
        for b in 0..n {
            let src = &x[ch * n * m + b * m..ch * n * m + (b + 1) * m];
            out[(b * c + ch) * m..(b * c + ch + 1) * m].copy_from_slice(src);
        }
    }
    out
}

fn conv_forward<T: Scalar>(g: &ConvGeometry, x: &[T], n: usize, weight: &[T], bias: &[T]) -> Vec<T> {
    let (oh, ow) = g.conv_out().expect("validated geometry");
    let ckk = g.in_channels * g.kernel * g.kernel;
    let cols = im2col(x, n, g.in_channels, g.in_h, g.in_w, g.kernel, g.stride, g.padding, oh, ow);
    let m = n * oh * ow;
    let mut out_cm = vec![T::zero(); g.out_channels * m];
    matmul(weight, false, &cols, false, &mut out_cm, g.out_channels, ckk, m, false);
    for (co, row) in out_cm.chunks_exact_mut(m).enumerate() {
        for v in row {
            *v = *v + bias[co];
        }
    }
    channel_to_batch_major(&out_cm, n, g.out_channels, oh * ow)
}

fn conv_backward<T: Scalar>(
    g: &ConvGeometry,
    x: &[T],
    n: usize,
    weight: &[T],
    dz: &[T],
    param_grads: bool,
) -> RawGrads<T> {
    let (oh, ow) = g.conv_out().expect("validated geometry");
    let ckk = g.in_channels * g.kernel * g.kernel;
    let m = n * oh * ow;
    let dz_cm = batch_to_channel_major(dz, n, g.out_channels, oh * ow);

    let mut dcols = vec![T::zero(); ckk * m];
    matmul(weight, true, &dz_cm, false, &mut dcols, ckk, g.out_channels, m, false);
    let dx = col2im(&dcols, n, g.in_channels, g.in_h, g.in_w, g.kernel, g.stride, g.padding, oh, ow);

    let params = param_grads.then(|| {
        let cols = im2col(x, n, g.in_channels, g.in_h, g.in_w, g.kernel, g.stride, g.padding, oh, ow);
        let mut dw = vec![T::zero(); g.out_channels * ckk];
        matmul(&dz_cm, false, &cols, true, &mut dw, g.out_channels, m, ckk, false);
        let db = dz_cm.chunks_exact(m).map(|row| row.iter().copied().sum()).collect();
        (dw, db)
    });
    (dx, params)
}

/// Weight `[out, in, k, k]` → `[in, out·k·k]`, the layout the transposed
/// convolution multiplies with.
fn deconv_weight_in_major<T: Scalar>(g: &ConvGeometry, weight: &[T]) -> Vec<T> {
    let kk = g.kernel * g.kernel;
    let mut wp = vec![T::zero(); weight.len()];
    for co in 0..g.out_channels {
        for ci in 0..g.in_channels {
            let src = &weight[(co * g.in_channels + ci) * kk..(co * g.in_channels + ci + 1) * kk];
            let dst_start = ci * g.out_channels * kk + co * kk;
            wp[dst_start..dst_start + kk].copy_from_slice(src);
        }
    }
    wp
}

fn deconv_weight_out_major<T: Scalar>(g: &ConvGeometry, wp: &[T]) -> Vec<T> {
    let kk = g.kernel * g.kernel;
    let mut w = vec![T::zero(); wp.len()];
    for co in 0..g.out_channels {
        for ci in 0..g.in_channels {
            let src_start = ci * g.out_channels * kk + co * kk;
            w[(co * g.in_channels + ci) * kk..(co * g.in_channels + ci + 1) * kk]
                .copy_from_slice(&wp[src_start..src_start + kk]);
        }
    }
    w
}

// A transposed convolution is the adjoint of the convolution that maps the
// (larger) output grid back onto the input grid, so it reuses im2col/col2im
// with the roles of the two grids swapped.
fn deconv_forward<T: Scalar>(g: &ConvGeometry, x: &[T], n: usize, weight: &[T], bias: &[T]) -> Vec<T> {
    let (oh, ow) = g.deconv_out().expect("validated geometry");
    let hw = g.in_h * g.in_w;
    let m = n * hw;
    let okk = g.out_channels * g.kernel * g.kernel;
    let wp = deconv_weight_in_major(g, weight);
    let x_cm = batch_to_channel_major(x, n, g.in_channels, hw);
    let mut cols = vec![T::zero(); okk * m];
    matmul(&wp, true, &x_cm, false, &mut cols, okk, g.in_channels, m, false);
    let mut out = col2im(&cols, n, g.out_channels, oh, ow, g.kernel, g.stride, g.padding, g.in_h, g.in_w);
    let plane = oh * ow;
    for (idx, chunk) in out.chunks_exact_mut(plane).enumerate() {
        let b = bias[idx % g.out_channels];
        for v in chunk {
            *v = *v + b;
        }
    }
    out
}

fn deconv_backward<T: Scalar>(
    g: &ConvGeometry,
    x: &[T],
    n: usize,
    weight: &[T],
    dz: &[T],
    param_grads: bool,
) -> RawGrads<T> {
    let (oh, ow) = g.deconv_out().expect("validated geometry");
    let hw = g.in_h * g.in_w;
    let m = n * hw;
    let okk = g.out_channels * g.kernel * g.kernel;
    let wp = deconv_weight_in_major(g, weight);
    let dcols = im2col(dz, n, g.out_channels, oh, ow, g.kernel, g.stride, g.padding, g.in_h, g.in_w);

    let mut dx_cm = vec![T::zero(); g.in_channels * m];
    matmul(&wp, false, &dcols, false, &mut dx_cm, g.in_channels, okk, m, false);
    let dx = channel_to_batch_major(&dx_cm, n, g.in_channels, hw);

    let params = param_grads.then(|| {
        let x_cm = batch_to_channel_major(x, n, g.in_channels, hw);
        let mut dwp = vec![T::zero(); g.in_channels * okk];
        matmul(&x_cm, false, &dcols, true, &mut dwp, g.in_channels, m, okk, false);
        let dw = deconv_weight_out_major(g, &dwp);
        let plane = oh * ow;
        let mut db = vec![T::zero(); g.out_channels];
        for (idx, chunk) in dz.chunks_exact(plane).enumerate() {
            let s: T = chunk.iter().copied().sum();
            db[idx % g.out_channels] = db[idx % g.out_channels] + s;
        }
        (dw, db)
    });
    (dx, params)
}

/// Input, weight and bias gradients of one layer, recomputing the forward
/// output internally.
pub fn layer_backward<T: Scalar>(
    layer: &Layer<T>,
    input: &Tensor<T>,
    upstream: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let output = layer.forward(input)?;
    let g = layer.backward(input, &output, upstream, true)?;
    Ok((
        g.input,
        g.weight.expect("parameter gradients requested"),
        g.bias.expect("parameter gradients requested"),
    ))
}
