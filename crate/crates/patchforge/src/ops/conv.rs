//! 2-D convolution (cross-correlation convention) and its two adjoints.
//!
//! `conv2d_nobias`, `conv2d_input_grad` and `conv2d_weight_grad` are each
//! first-class recorded ops whose backward rules are expressed through the
//! other two, so the family is closed under differentiation to any order.

use rayon::prelude::*;

use crate::error::TensorError;
use crate::graph::OpKind;
use crate::ops::{add, broadcast_to, finish_op, reshape};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn out_extent(i: usize, k: usize, stride: usize, pad: usize) -> Result<usize, TensorError> {
    let padded = i + 2 * pad;
    if padded < k {
        return Err(TensorError::ShapeMismatch(format!(
            "non-positive output extent: input {i} with pad {pad} is smaller than kernel {k}"
        )));
    }
    Ok((padded - k) / stride + 1)
}

/// Convolution without bias: `x: N×I×H×W` with `w: O×I×kH×kW`.
pub fn conv2d_nobias<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>, TensorError> {
    if stride < 1 {
        return Err(TensorError::InvalidArgument("stride must be >= 1".into()));
    }
    let (n, ci, h, wd) = x.dims4()?;
    let (o, ci_w, kh, kw) = w.dims4()?;
    if ci != ci_w {
        return Err(TensorError::ShapeMismatch(format!(
            "channel mismatch: input has {ci}, weight expects {ci_w}"
        )));
    }
    let oh = out_extent(h, kh, stride, pad)?;
    let ow = out_extent(wd, kw, stride, pad)?;

    let xd = x.data();
    let wdat = w.data();
    let plane = oh * ow;
    let mut out = vec![T::ZERO; n * o * plane];
    out.par_chunks_mut(plane).enumerate().for_each(|(p, dst)| {
        let ni = p / o;
        let oi = p % o;
        let x_base = ni * ci * h * wd;
        let w_base = oi * ci * kh * kw;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = T::ZERO;
                for i in 0..ci {
                    let x_chan = x_base + i * h * wd;
                    let w_chan = w_base + i * kh * kw;
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let x_row = x_chan + iy as usize * wd;
                        let w_row = w_chan + ky * kw;
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= wd as isize {
                                continue;
                            }
                            acc += xd[x_row + ix as usize] * wdat[w_row + kx];
                        }
                    }
                }
                dst[oy * ow + ox] = acc;
            }
        }
    });
    finish_op(OpKind::Conv2d { stride, pad }, &[x, w], vec![n, o, oh, ow], out)
}

/// Convolution with bias broadcast over batch and spatial dims.
pub fn conv2d<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>, TensorError> {
    let y = conv2d_nobias(x, w, stride, pad)?;
    match bias {
        None => Ok(y),
        Some(b) => {
            let o = w.shape()[0];
            if b.shape() != [o] {
                return Err(TensorError::ShapeMismatch(format!(
                    "bias shape {:?}, expected [{o}]",
                    b.shape()
                )));
            }
            let b4 = reshape(b, &[1, o, 1, 1])?;
            let bb = broadcast_to(&b4, y.shape())?;
            add(&y, &bb)
        }
    }
}

/// Adjoint of [`conv2d_nobias`] in its input: maps an output-shaped tensor
/// back to an `(ih, iw)` input-shaped one. Also serves as the transposed
/// convolution.
pub fn conv2d_input_grad<T: Scalar>(
    gy: &Tensor<T>,
    w: &Tensor<T>,
    input_hw: (usize, usize),
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>, TensorError> {
    let (n, o_g, oh, ow) = gy.dims4()?;
    let (o, ci, kh, kw) = w.dims4()?;
    if o_g != o {
        return Err(TensorError::ShapeMismatch(format!(
            "channel mismatch: gradient has {o_g}, weight produces {o}"
        )));
    }
    let (ih, iw) = input_hw;
    if out_extent(ih, kh, stride, pad)? != oh || out_extent(iw, kw, stride, pad)? != ow {
        return Err(TensorError::ShapeMismatch(format!(
            "output {oh}x{ow} inconsistent with input {ih}x{iw}, kernel {kh}x{kw}, stride {stride}, pad {pad}"
        )));
    }

    let gd = gy.data();
    let wdat = w.data();
    let plane = ih * iw;
    let mut out = vec![T::ZERO; n * ci * plane];
    out.par_chunks_mut(plane).enumerate().for_each(|(p, dst)| {
        let ni = p / ci;
        let i = p % ci;
        let g_base = ni * o * oh * ow;
        for hy in 0..ih {
            for hx in 0..iw {
                let mut acc = T::ZERO;
                for ky in 0..kh {
                    let ny = hy + pad;
                    if ny < ky || (ny - ky) % stride != 0 {
                        continue;
                    }
                    let y = (ny - ky) / stride;
                    if y >= oh {
                        continue;
                    }
                    for kx in 0..kw {
                        let nx = hx + pad;
                        if nx < kx || (nx - kx) % stride != 0 {
                            continue;
                        }
                        let x = (nx - kx) / stride;
                        if x >= ow {
                            continue;
                        }
                        for oi in 0..o {
                            acc += gd[g_base + oi * oh * ow + y * ow + x]
                                * wdat[oi * ci * kh * kw + i * kh * kw + ky * kw + kx];
                        }
                    }
                }
                dst[hy * iw + hx] = acc;
            }
        }
    });
    finish_op(
        OpKind::ConvInputGrad { stride, pad },
        &[gy, w],
        vec![n, ci, ih, iw],
        out,
    )
}

/// Adjoint of [`conv2d_nobias`] in its weight: correlates input activations
/// with an output-shaped tensor.
pub fn conv2d_weight_grad<T: Scalar>(
    x: &Tensor<T>,
    gy: &Tensor<T>,
    kernel_hw: (usize, usize),
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>, TensorError> {
    let (n, ci, ih, iw) = x.dims4()?;
    let (n_g, o, oh, ow) = gy.dims4()?;
    if n != n_g {
        return Err(TensorError::ShapeMismatch(format!(
            "batch mismatch: {n} vs {n_g}"
        )));
    }
    let (kh, kw) = kernel_hw;
    if out_extent(ih, kh, stride, pad)? != oh || out_extent(iw, kw, stride, pad)? != ow {
        return Err(TensorError::ShapeMismatch(format!(
            "output {oh}x{ow} inconsistent with input {ih}x{iw}, kernel {kh}x{kw}, stride {stride}, pad {pad}"
        )));
    }

    let xd = x.data();
    let gd = gy.data();
    let plane = kh * kw;
    let mut out = vec![T::ZERO; o * ci * plane];
    out.par_chunks_mut(plane).enumerate().for_each(|(p, dst)| {
        let oi = p / ci;
        let i = p % ci;
        for ky in 0..kh {
            for kx in 0..kw {
                let mut acc = T::ZERO;
                for ni in 0..n {
                    let x_chan = ni * ci * ih * iw + i * ih * iw;
                    let g_chan = ni * o * oh * ow + oi * oh * ow;
                    for y in 0..oh {
                        let yy = (y * stride + ky) as isize - pad as isize;
                        if yy < 0 || yy >= ih as isize {
                            continue;
                        }
                        let x_row = x_chan + yy as usize * iw;
                        let g_row = g_chan + y * ow;
                        for xq in 0..ow {
                            let xx = (xq * stride + kx) as isize - pad as isize;
                            if xx < 0 || xx >= iw as isize {
                                continue;
                            }
                            acc += gd[g_row + xq] * xd[x_row + xx as usize];
                        }
                    }
                }
                dst[ky * kw + kx] = acc;
            }
        }
    });
    finish_op(
        OpKind::ConvWeightGrad { stride, pad },
        &[x, gy],
        vec![o, ci, kh, kw],
        out,
    )
}

/// Transposed 4×4 convolution from a 1×1 spatial map: `z: N×C×1×1` with
/// `w: C×C'×4×4` gives `N×C'×4×4`. This is the input-adjoint of a valid
/// 4×4 convolution, so it shares that op's recording.
pub fn conv_transpose2d_4x4<T: Scalar>(
    z: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>, TensorError> {
    let (_, _, h, wd) = z.dims4()?;
    if (h, wd) != (1, 1) {
        return Err(TensorError::ShapeMismatch(format!(
            "transposed 4x4 conv expects 1x1 spatial input, got {h}x{wd}"
        )));
    }
    let y = conv2d_input_grad(z, w, (4, 4), 1, 0)?;
    match bias {
        None => Ok(y),
        Some(b) => {
            let o = w.shape()[1];
            if b.shape() != [o] {
                return Err(TensorError::ShapeMismatch(format!(
                    "bias shape {:?}, expected [{o}]",
                    b.shape()
                )));
            }
            let b4 = reshape(b, &[1, o, 1, 1])?;
            let bb = broadcast_to(&b4, y.shape())?;
            add(&y, &bb)
        }
    }
}
