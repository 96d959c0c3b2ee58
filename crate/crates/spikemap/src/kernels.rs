//! Numeric kernels shared by the forward runners, the hand-written BPTT
//! path, and the autodiff tape.
//!
//! Every kernel is a pure function over row-major tensors. Reductions run
//! in a fixed index order; nothing here allocates per element or depends on
//! iteration order of a map.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{offset4, Tensor};

/// C[m,n] = A[m,k] * B[k,n]
pub fn matmul<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut c = vec![S::zero(); m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for kk in 0..k {
            let aik = a[i * k + kk];
            if aik == S::zero() {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            for j in 0..n {
                crow[j] = crow[j] + aik * brow[j];
            }
        }
    }
    c
}

/// C[m,n] = A[m,k] * B[n,k]^T
pub fn matmul_a_bt<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut c = vec![S::zero(); m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = S::zero();
            for kk in 0..k {
                acc = acc + arow[kk] * brow[kk];
            }
            c[i * n + j] = acc;
        }
    }
    c
}

/// C[m,n] = A[k,m]^T * B[k,n]
pub fn matmul_at_b<S: Scalar>(a: &[S], b: &[S], k: usize, m: usize, n: usize) -> Vec<S> {
    let mut c = vec![S::zero(); m * n];
    for kk in 0..k {
        let arow = &a[kk * m..(kk + 1) * m];
        let brow = &b[kk * n..(kk + 1) * n];
        for i in 0..m {
            let aki = arow[i];
            if aki == S::zero() {
                continue;
            }
            let crow = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] = crow[j] + aki * brow[j];
            }
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

/// Validates conv shapes and computes output extents.
pub fn conv2d_geometry(
    input_shape: &[usize],
    kernel_shape: &[usize],
    stride: usize,
    padding: usize,
) -> Result<Conv2dGeometry> {
    if input_shape.len() != 4 {
        return Err(Error::shape("conv2d", format!("input must be 4-d, got {:?}", input_shape)));
    }
    if kernel_shape.len() != 4 {
        return Err(Error::shape("conv2d", format!("kernel must be 4-d, got {:?}", kernel_shape)));
    }
    if stride == 0 {
        return Err(Error::invalid("conv2d", "stride must be positive"));
    }
    let (batch, in_c, in_h, in_w) = (input_shape[0], input_shape[1], input_shape[2], input_shape[3]);
    let (out_c, k_in_c, kh, kw) = (kernel_shape[0], kernel_shape[1], kernel_shape[2], kernel_shape[3]);
    if in_c != k_in_c {
        return Err(Error::shape(
            "conv2d",
            format!("input channels {} vs kernel channels {}", in_c, k_in_c),
        ));
    }
    let padded_h = in_h + 2 * padding;
    let padded_w = in_w + 2 * padding;
    if padded_h < kh || padded_w < kw {
        return Err(Error::shape(
            "conv2d",
            format!("kernel {}x{} larger than padded input {}x{}", kh, kw, padded_h, padded_w),
        ));
    }
    Ok(Conv2dGeometry {
        batch,
        in_channels: in_c,
        in_h,
        in_w,
        out_channels: out_c,
        kernel_h: kh,
        kernel_w: kw,
        stride,
        padding,
        out_h: (padded_h - kh) / stride + 1,
        out_w: (padded_w - kw) / stride + 1,
    })
}

/// Unfolds input patches into a [batch*out_h*out_w, in_c*kh*kw] matrix.
fn im2col<S: Scalar>(x: &[S], g: &Conv2dGeometry) -> Vec<S> {
    let ckk = g.in_channels * g.kernel_h * g.kernel_w;
    let mut cols = vec![S::zero(); g.batch * g.out_h * g.out_w * ckk];
    let in_shape = [g.batch, g.in_channels, g.in_h, g.in_w];
    let mut row = 0usize;
    for n in 0..g.batch {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let base = row * ckk;
                let iy0 = (oy * g.stride) as isize - g.padding as isize;
                let ix0 = (ox * g.stride) as isize - g.padding as isize;
                let mut col = 0usize;
                for c in 0..g.in_channels {
                    for ky in 0..g.kernel_h {
                        let iy = iy0 + ky as isize;
                        if iy < 0 || iy >= g.in_h as isize {
                            col += g.kernel_w;
                            continue;
                        }
                        for kx in 0..g.kernel_w {
                            let ix = ix0 + kx as isize;
                            if ix >= 0 && ix < g.in_w as isize {
                                cols[base + col] =
                                    x[offset4(&in_shape, n, c, iy as usize, ix as usize)];
                            }
                            col += 1;
                        }
                    }
                }
                row += 1;
            }
        }
    }
    cols
}

/// Scatter-adds column gradients back onto the input layout.
fn col2im<S: Scalar>(cols: &[S], g: &Conv2dGeometry) -> Vec<S> {
    let ckk = g.in_channels * g.kernel_h * g.kernel_w;
    let mut x = vec![S::zero(); g.batch * g.in_channels * g.in_h * g.in_w];
    let in_shape = [g.batch, g.in_channels, g.in_h, g.in_w];
    let mut row = 0usize;
    for n in 0..g.batch {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let base = row * ckk;
                let iy0 = (oy * g.stride) as isize - g.padding as isize;
                let ix0 = (ox * g.stride) as isize - g.padding as isize;
                let mut col = 0usize;
                for c in 0..g.in_channels {
                    for ky in 0..g.kernel_h {
                        let iy = iy0 + ky as isize;
                        if iy < 0 || iy >= g.in_h as isize {
                            col += g.kernel_w;
                            continue;
                        }
                        for kx in 0..g.kernel_w {
                            let ix = ix0 + kx as isize;
                            if ix >= 0 && ix < g.in_w as isize {
                                let off = offset4(&in_shape, n, c, iy as usize, ix as usize);
                                x[off] = x[off] + cols[base + col];
                            }
                            col += 1;
                        }
                    }
                }
                row += 1;
            }
        }
    }
    x
}

/// Reorders conv output gradient [N,K,OH,OW] into row-major rows [N*OH*OW, K].
fn grad_to_rows<S: Scalar>(gy: &[S], g: &Conv2dGeometry) -> Vec<S> {
    let out_shape = [g.batch, g.out_channels, g.out_h, g.out_w];
    let mut rows = vec![S::zero(); g.batch * g.out_h * g.out_w * g.out_channels];
    let mut row = 0usize;
    for n in 0..g.batch {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                for k in 0..g.out_channels {
                    rows[row * g.out_channels + k] = gy[offset4(&out_shape, n, k, oy, ox)];
                }
                row += 1;
            }
        }
    }
    rows
}

pub fn conv2d_forward<S: Scalar>(
    input: &Tensor<S>,
    kernel: &Tensor<S>,
    bias: Option<&Tensor<S>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<S>> {
    let g = conv2d_geometry(input.shape(), kernel.shape(), stride, padding)?;
    if let Some(b) = bias {
        if b.shape() != [g.out_channels] {
            return Err(Error::shape(
                "conv2d",
                format!("bias shape {:?} vs {} output channels", b.shape(), g.out_channels),
            ));
        }
    }
    let ckk = g.in_channels * g.kernel_h * g.kernel_w;
    let rows = g.batch * g.out_h * g.out_w;
    let cols = im2col(input.data(), &g);
    let y_rows = matmul_a_bt(&cols, kernel.data(), rows, ckk, g.out_channels);
    let out_shape = [g.batch, g.out_channels, g.out_h, g.out_w];
    let mut y = vec![S::zero(); rows * g.out_channels];
    let mut row = 0usize;
    for n in 0..g.batch {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                for k in 0..g.out_channels {
                    let mut v = y_rows[row * g.out_channels + k];
                    if let Some(b) = bias {
                        v = v + b.data()[k];
                    }
                    y[offset4(&out_shape, n, k, oy, ox)] = v;
                }
                row += 1;
            }
        }
    }
    let out = Tensor::from_vec(&out_shape, y)?;
    out.ensure_finite("conv2d")?;
    Ok(out)
}

pub struct Conv2dGrads<S: Scalar> {
    pub input: Tensor<S>,
    pub kernel: Tensor<S>,
    pub bias: Option<Tensor<S>>,
}

pub fn conv2d_backward<S: Scalar>(
    grad_output: &Tensor<S>,
    input: &Tensor<S>,
    kernel: &Tensor<S>,
    has_bias: bool,
    stride: usize,
    padding: usize,
) -> Result<Conv2dGrads<S>> {
    let g = conv2d_geometry(input.shape(), kernel.shape(), stride, padding)?;
    let expected = [g.batch, g.out_channels, g.out_h, g.out_w];
    if grad_output.shape() != expected {
        return Err(Error::shape(
            "conv2d_backward",
            format!("grad shape {:?} vs {:?}", grad_output.shape(), expected),
        ));
    }
    let ckk = g.in_channels * g.kernel_h * g.kernel_w;
    let rows = g.batch * g.out_h * g.out_w;
    let gy_rows = grad_to_rows(grad_output.data(), &g);
    let x_cols = im2col(input.data(), &g);

    let gk = matmul_at_b(&gy_rows, &x_cols, rows, g.out_channels, ckk);
    let gx_cols = matmul(&gy_rows, kernel.data(), rows, g.out_channels, ckk);
    let gx = col2im(&gx_cols, &g);

    let gbias = if has_bias {
        let mut gb = vec![S::zero(); g.out_channels];
        for row in 0..rows {
            for k in 0..g.out_channels {
                gb[k] = gb[k] + gy_rows[row * g.out_channels + k];
            }
        }
        Some(Tensor::from_vec(&[g.out_channels], gb)?)
    } else {
        None
    };

    Ok(Conv2dGrads {
        input: Tensor::from_vec(input.shape(), gx)?,
        kernel: Tensor::from_vec(kernel.shape(), gk)?,
        bias: gbias,
    })
}

pub fn linear_forward<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    bias: Option<&Tensor<S>>,
) -> Result<Tensor<S>> {
    if input.shape().len() != 2 || weight.shape().len() != 2 {
        return Err(Error::shape(
            "linear",
            format!("need 2-d input and weight, got {:?} and {:?}", input.shape(), weight.shape()),
        ));
    }
    let (n, d) = (input.shape()[0], input.shape()[1]);
    let (m, wd) = (weight.shape()[0], weight.shape()[1]);
    if d != wd {
        return Err(Error::shape("linear", format!("input dim {} vs weight dim {}", d, wd)));
    }
    if let Some(b) = bias {
        if b.shape() != [m] {
            return Err(Error::shape(
                "linear",
                format!("bias shape {:?} vs {} outputs", b.shape(), m),
            ));
        }
    }
    let mut y = matmul_a_bt(input.data(), weight.data(), n, d, m);
    if let Some(b) = bias {
        for i in 0..n {
            for j in 0..m {
                y[i * m + j] = y[i * m + j] + b.data()[j];
            }
        }
    }
    let out = Tensor::from_vec(&[n, m], y)?;
    out.ensure_finite("linear")?;
    Ok(out)
}

pub struct LinearGrads<S: Scalar> {
    pub input: Tensor<S>,
    pub weight: Tensor<S>,
    pub bias: Option<Tensor<S>>,
}

pub fn linear_backward<S: Scalar>(
    grad_output: &Tensor<S>,
    input: &Tensor<S>,
    weight: &Tensor<S>,
    has_bias: bool,
) -> Result<LinearGrads<S>> {
    let (n, d) = (input.shape()[0], input.shape()[1]);
    let m = weight.shape()[0];
    if grad_output.shape() != [n, m] {
        return Err(Error::shape(
            "linear_backward",
            format!("grad shape {:?} vs [{}, {}]", grad_output.shape(), n, m),
        ));
    }
    let gx = matmul(grad_output.data(), weight.data(), n, m, d);
    let gw = matmul_at_b(grad_output.data(), input.data(), n, m, d);
    let gb = if has_bias {
        let mut acc = vec![S::zero(); m];
        for i in 0..n {
            for j in 0..m {
                acc[j] = acc[j] + grad_output.data()[i * m + j];
            }
        }
        Some(Tensor::from_vec(&[m], acc)?)
    } else {
        None
    };
    Ok(LinearGrads {
        input: Tensor::from_vec(&[n, d], gx)?,
        weight: Tensor::from_vec(&[m, d], gw)?,
        bias: gb,
    })
}

/// Non-overlapping average pooling; spatial extents must divide evenly.
pub fn avgpool2d_forward<S: Scalar>(input: &Tensor<S>, kernel: usize) -> Result<Tensor<S>> {
    if input.shape().len() != 4 {
        return Err(Error::shape("avgpool2d", format!("need 4-d input, got {:?}", input.shape())));
    }
    if kernel == 0 {
        return Err(Error::invalid("avgpool2d", "kernel must be positive"));
    }
    let (n, c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]);
    if h % kernel != 0 || w % kernel != 0 {
        return Err(Error::shape(
            "avgpool2d",
            format!("spatial {}x{} not divisible by kernel {}", h, w, kernel),
        ));
    }
    let (oh, ow) = (h / kernel, w / kernel);
    let in_shape = [n, c, h, w];
    let out_shape = [n, c, oh, ow];
    let inv_area = S::one() / S::from_f64_c((kernel * kernel) as f64);
    let mut y = vec![S::zero(); n * c * oh * ow];
    for nn in 0..n {
        for cc in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = S::zero();
                    for ky in 0..kernel {
                        for kx in 0..kernel {
                            acc = acc
                                + input.data()
                                    [offset4(&in_shape, nn, cc, oy * kernel + ky, ox * kernel + kx)];
                        }
                    }
                    y[offset4(&out_shape, nn, cc, oy, ox)] = acc * inv_area;
                }
            }
        }
    }
    Tensor::from_vec(&out_shape, y)
}

pub fn avgpool2d_backward<S: Scalar>(
    grad_output: &Tensor<S>,
    input_shape: &[usize],
    kernel: usize,
) -> Result<Tensor<S>> {
    let (n, c, h, w) = (input_shape[0], input_shape[1], input_shape[2], input_shape[3]);
    let (oh, ow) = (h / kernel, w / kernel);
    if grad_output.shape() != [n, c, oh, ow] {
        return Err(Error::shape(
            "avgpool2d_backward",
            format!("grad shape {:?} vs [{}, {}, {}, {}]", grad_output.shape(), n, c, oh, ow),
        ));
    }
    let out_shape = [n, c, oh, ow];
    let in_shape = [n, c, h, w];
    let inv_area = S::one() / S::from_f64_c((kernel * kernel) as f64);
    let mut gx = vec![S::zero(); n * c * h * w];
    for nn in 0..n {
        for cc in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = grad_output.data()[offset4(&out_shape, nn, cc, oy, ox)] * inv_area;
                    for ky in 0..kernel {
                        for kx in 0..kernel {
                            gx[offset4(&in_shape, nn, cc, oy * kernel + ky, ox * kernel + kx)] = g;
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(input_shape, gx)
}

pub fn relu_forward<S: Scalar>(input: &Tensor<S>) -> Tensor<S> {
    input.map(|v| if v > S::zero() { v } else { S::zero() })
}

pub fn relu_backward<S: Scalar>(grad_output: &Tensor<S>, input: &Tensor<S>) -> Result<Tensor<S>> {
    grad_output.zip(input, "relu_backward", |g, x| if x > S::zero() { g } else { S::zero() })
}

/// Row-wise stable softmax over [N, C].
pub fn softmax_rows<S: Scalar>(logits: &Tensor<S>) -> Result<Tensor<S>> {
    if logits.shape().len() != 2 {
        return Err(Error::shape("softmax", format!("need 2-d logits, got {:?}", logits.shape())));
    }
    let (n, c) = (logits.shape()[0], logits.shape()[1]);
    if c == 0 {
        return Err(Error::invalid("softmax", "zero classes"));
    }
    let mut out = vec![S::zero(); n * c];
    for i in 0..n {
        let row = &logits.data()[i * c..(i + 1) * c];
        let mut max = row[0];
        for &v in row.iter().skip(1) {
            if v > max {
                max = v;
            }
        }
        let mut denom = S::zero();
        for j in 0..c {
            let e = (row[j] - max).exp();
            out[i * c + j] = e;
            denom = denom + e;
        }
        for j in 0..c {
            out[i * c + j] = out[i * c + j] / denom;
        }
    }
    Tensor::from_vec(&[n, c], out)
}

pub struct SoftmaxCeOutput<S: Scalar> {
    pub loss: S,
    pub probs: Tensor<S>,
}

/// Mean cross-entropy over the batch, natural log.
pub fn softmax_cross_entropy_forward<S: Scalar>(
    logits: &Tensor<S>,
    labels: &[usize],
) -> Result<SoftmaxCeOutput<S>> {
    let (n, c) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != n {
        return Err(Error::shape(
            "softmax_cross_entropy",
            format!("{} labels for batch {}", labels.len(), n),
        ));
    }
    if n == 0 {
        return Err(Error::invalid("softmax_cross_entropy", "empty batch"));
    }
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::invalid(
                "softmax_cross_entropy",
                format!("label {} out of range for {} classes (sample {})", y, c, i),
            ));
        }
    }
    let probs = softmax_rows(logits)?;
    let mut loss = S::zero();
    for (i, &y) in labels.iter().enumerate() {
        loss = loss - probs.data()[i * c + y].ln();
    }
    loss = loss / S::from_f64_c(n as f64);
    if !loss.is_finite() {
        return Err(Error::non_finite("softmax_cross_entropy", format!("loss = {}", loss)));
    }
    Ok(SoftmaxCeOutput { loss, probs })
}

/// d(loss)/d(logits) given cached probabilities; `grad` scales the seed.
pub fn softmax_cross_entropy_backward<S: Scalar>(
    probs: &Tensor<S>,
    labels: &[usize],
    grad: S,
) -> Result<Tensor<S>> {
    let (n, c) = (probs.shape()[0], probs.shape()[1]);
    let scale = grad / S::from_f64_c(n as f64);
    let mut g = probs.data().to_vec();
    for (i, &y) in labels.iter().enumerate() {
        g[i * c + y] = g[i * c + y] - S::one();
    }
    for v in g.iter_mut() {
        *v = *v * scale;
    }
    Tensor::from_vec(&[n, c], g)
}

/// Per-channel batch statistics of a [N,C] or [N,C,H,W] tensor.
/// Variance is the population variance (division by the element count).
pub fn channel_stats<S: Scalar>(x: &Tensor<S>) -> Result<(Vec<S>, Vec<S>, usize)> {
    let (n, c, spatial) = match x.shape() {
        [n, c] => (*n, *c, 1usize),
        [n, c, h, w] => (*n, *c, h * w),
        other => {
            return Err(Error::shape(
                "channel_stats",
                format!("need [N,C] or [N,C,H,W], got {:?}", other),
            ))
        }
    };
    let count = n * spatial;
    if count == 0 {
        return Err(Error::invalid("channel_stats", "zero batch"));
    }
    let inv = S::one() / S::from_f64_c(count as f64);
    let mut mean = vec![S::zero(); c];
    let mut var = vec![S::zero(); c];
    for nn in 0..n {
        for cc in 0..c {
            let base = (nn * c + cc) * spatial;
            let mut acc = S::zero();
            for s in 0..spatial {
                acc = acc + x.data()[base + s];
            }
            mean[cc] = mean[cc] + acc;
        }
    }
    for m in mean.iter_mut() {
        *m = *m * inv;
    }
    for nn in 0..n {
        for cc in 0..c {
            let base = (nn * c + cc) * spatial;
            let mut acc = S::zero();
            for s in 0..spatial {
                let d = x.data()[base + s] - mean[cc];
                acc = acc + d * d;
            }
            var[cc] = var[cc] + acc;
        }
    }
    for v in var.iter_mut() {
        *v = *v * inv;
    }
    Ok((mean, var, count))
}

/// Scale-only normalization: y = gamma * (x - mean) / sqrt(var + eps).
/// No shift term.
pub fn bn_scale_forward<S: Scalar>(
    x: &Tensor<S>,
    gamma: &[S],
    mean: &[S],
    var: &[S],
    eps: S,
) -> Result<Tensor<S>> {
    let (n, c, spatial) = match x.shape() {
        [n, c] => (*n, *c, 1usize),
        [n, c, h, w] => (*n, *c, h * w),
        other => {
            return Err(Error::shape(
                "bn_scale",
                format!("need [N,C] or [N,C,H,W], got {:?}", other),
            ))
        }
    };
    if gamma.len() != c || mean.len() != c || var.len() != c {
        return Err(Error::shape(
            "bn_scale",
            format!("{} channels vs gamma {} mean {} var {}", c, gamma.len(), mean.len(), var.len()),
        ));
    }
    let mut y = vec![S::zero(); x.numel()];
    for cc in 0..c {
        let inv_std = S::one() / (var[cc] + eps).sqrt();
        let scale = gamma[cc] * inv_std;
        for nn in 0..n {
            let base = (nn * c + cc) * spatial;
            for s in 0..spatial {
                y[base + s] = (x.data()[base + s] - mean[cc]) * scale;
            }
        }
    }
    let out = Tensor::from_vec(x.shape(), y)?;
    out.ensure_finite("bn_scale")?;
    Ok(out)
}

pub struct BnScaleGrads<S: Scalar> {
    pub input: Tensor<S>,
    pub gamma: Vec<S>,
}

/// Backward through scale-only normalization with *fixed* statistics
/// (running averages at inference): mean/var are treated as constants.
pub fn bn_scale_backward_fixed<S: Scalar>(
    grad_output: &Tensor<S>,
    x: &Tensor<S>,
    gamma: &[S],
    mean: &[S],
    var: &[S],
    eps: S,
) -> Result<BnScaleGrads<S>> {
    let (n, c, spatial) = match x.shape() {
        [n, c] => (*n, *c, 1usize),
        [n, c, h, w] => (*n, *c, h * w),
        other => {
            return Err(Error::shape(
                "bn_scale_backward",
                format!("need [N,C] or [N,C,H,W], got {:?}", other),
            ))
        }
    };
    if grad_output.shape() != x.shape() {
        return Err(Error::shape(
            "bn_scale_backward",
            format!("grad {:?} vs input {:?}", grad_output.shape(), x.shape()),
        ));
    }
    let mut gx = vec![S::zero(); x.numel()];
    let mut ggamma = vec![S::zero(); c];
    for cc in 0..c {
        let inv_std = S::one() / (var[cc] + eps).sqrt();
        for nn in 0..n {
            let base = (nn * c + cc) * spatial;
            for s in 0..spatial {
                let g = grad_output.data()[base + s];
                let xhat = (x.data()[base + s] - mean[cc]) * inv_std;
                gx[base + s] = g * gamma[cc] * inv_std;
                ggamma[cc] = ggamma[cc] + g * xhat;
            }
        }
    }
    Ok(BnScaleGrads { input: Tensor::from_vec(x.shape(), gx)?, gamma: ggamma })
}

/// Backward through scale-only normalization where mean/var were computed
/// from this batch (training mode), so gradients flow through the stats.
pub fn bn_scale_backward_batch<S: Scalar>(
    grad_output: &Tensor<S>,
    x: &Tensor<S>,
    gamma: &[S],
    mean: &[S],
    var: &[S],
    eps: S,
) -> Result<BnScaleGrads<S>> {
    let (n, c, spatial) = match x.shape() {
        [n, c] => (*n, *c, 1usize),
        [n, c, h, w] => (*n, *c, h * w),
        other => {
            return Err(Error::shape(
                "bn_scale_backward",
                format!("need [N,C] or [N,C,H,W], got {:?}", other),
            ))
        }
    };
    if grad_output.shape() != x.shape() {
        return Err(Error::shape(
            "bn_scale_backward",
            format!("grad {:?} vs input {:?}", grad_output.shape(), x.shape()),
        ));
    }
    let count = S::from_f64_c((n * spatial) as f64);
    let mut gx = vec![S::zero(); x.numel()];
    let mut ggamma = vec![S::zero(); c];
    for cc in 0..c {
        let inv_std = S::one() / (var[cc] + eps).sqrt();
        // First pass: sum of dxhat and sum of dxhat * xhat over the channel.
        let mut sum_dxhat = S::zero();
        let mut sum_dxhat_xhat = S::zero();
        for nn in 0..n {
            let base = (nn * c + cc) * spatial;
            for s in 0..spatial {
                let g = grad_output.data()[base + s];
                let dxhat = g * gamma[cc];
                let xhat = (x.data()[base + s] - mean[cc]) * inv_std;
                sum_dxhat = sum_dxhat + dxhat;
                sum_dxhat_xhat = sum_dxhat_xhat + dxhat * xhat;
                ggamma[cc] = ggamma[cc] + g * xhat;
            }
        }
        // dx = inv_std/m * (m*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat))
        for nn in 0..n {
            let base = (nn * c + cc) * spatial;
            for s in 0..spatial {
                let g = grad_output.data()[base + s];
                let dxhat = g * gamma[cc];
                let xhat = (x.data()[base + s] - mean[cc]) * inv_std;
                gx[base + s] =
                    inv_std / count * (count * dxhat - sum_dxhat - xhat * sum_dxhat_xhat);
            }
        }
    }
    Ok(BnScaleGrads { input: Tensor::from_vec(x.shape(), gx)?, gamma: ggamma })
}

/// Corner-anchored bilinear resize of a 2-d map.
pub fn bilinear_resize<S: Scalar>(
    input: &Tensor<S>,
    out_h: usize,
    out_w: usize,
) -> Result<Tensor<S>> {
    if input.shape().len() != 2 {
        return Err(Error::shape(
            "bilinear_resize",
            format!("need 2-d map, got {:?}", input.shape()),
        ));
    }
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid("bilinear_resize", "zero output extent"));
    }
    let (h, w) = (input.shape()[0], input.shape()[1]);
    if h == 0 || w == 0 {
        return Err(Error::invalid("bilinear_resize", "zero input extent"));
    }
    let scale_y = if out_h > 1 { (h - 1) as f64 / (out_h - 1) as f64 } else { 0.0 };
    let scale_x = if out_w > 1 { (w - 1) as f64 / (out_w - 1) as f64 } else { 0.0 };
    let mut out = vec![S::zero(); out_h * out_w];
    for oy in 0..out_h {
        let sy = oy as f64 * scale_y;
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = S::from_f64_c(sy - y0 as f64);
        for ox in 0..out_w {
            let sx = ox as f64 * scale_x;
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = S::from_f64_c(sx - x0 as f64);
            let one = S::one();
            let v00 = input.data()[y0 * w + x0];
            let v01 = input.data()[y0 * w + x1];
            let v10 = input.data()[y1 * w + x0];
            let v11 = input.data()[y1 * w + x1];
            let top = v00 * (one - fx) + v01 * fx;
            let bot = v10 * (one - fx) + v11 * fx;
            out[oy * out_w + ox] = top * (one - fy) + bot * fy;
        }
    }
    Tensor::from_vec(&[out_h, out_w], out)
}

/// Flattens [N,C,H,W] to [N, C*H*W].
pub fn flatten_batch<S: Scalar>(input: &Tensor<S>) -> Result<Tensor<S>> {
    match input.shape() {
        [n, rest @ ..] => {
            let d: usize = rest.iter().product();
            input.reshaped(&[*n, d])
        }
        _ => Err(Error::shape("flatten", "need at least 1-d input".to_string())),
    }
}
