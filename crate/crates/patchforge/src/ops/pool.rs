use crate::error::TensorError;
use crate::graph::OpKind;
use crate::ops::finish_op;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// 2×2 average pooling; both spatial extents must be even.
pub fn avg_pool_2x2<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let (n, c, h, w) = x.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(TensorError::ShapeMismatch(format!(
            "avg_pool_2x2 requires even spatial extents, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let xd = x.data();
    let quarter = T::from_f64(0.25);
    let mut out = vec![T::ZERO; n * c * oh * ow];
    for p in 0..n * c {
        let src = p * h * w;
        let dst = p * oh * ow;
        for oy in 0..oh {
            for ox in 0..ow {
                let r0 = src + (2 * oy) * w + 2 * ox;
                let r1 = r0 + w;
                out[dst + oy * ow + ox] = (xd[r0] + xd[r0 + 1] + xd[r1] + xd[r1 + 1]) * quarter;
            }
        }
    }
    finish_op(OpKind::AvgPool2x2, &[x], vec![n, c, oh, ow], out)
}

/// Nearest-neighbor 2× upsampling: each pixel becomes a 2×2 block.
pub fn upsample_nearest_2x<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let (n, c, h, w) = x.dims4()?;
    let (oh, ow) = (2 * h, 2 * w);
    let xd = x.data();
    let mut out = vec![T::ZERO; n * c * oh * ow];
    for p in 0..n * c {
        let src = p * h * w;
        let dst = p * oh * ow;
        for y in 0..h {
            for xq in 0..w {
                let v = xd[src + y * w + xq];
                let r0 = dst + (2 * y) * ow + 2 * xq;
                out[r0] = v;
                out[r0 + 1] = v;
                out[r0 + ow] = v;
                out[r0 + ow + 1] = v;
            }
        }
    }
    finish_op(OpKind::Upsample2x, &[x], vec![n, c, oh, ow], out)
}

/// Channel concatenation, `a`'s channels first. Batch and spatial dims must
/// match; zero-channel inputs are allowed.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let (na, ca, ha, wa) = a.dims4()?;
    let (nb, cb, hb, wb) = b.dims4()?;
    if (na, ha, wa) != (nb, hb, wb) {
        return Err(TensorError::ShapeMismatch(format!(
            "concat_channels: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let c = ca + cb;
    let plane = ha * wa;
    let ad = a.data();
    let bd = b.data();
    let mut out = vec![T::ZERO; na * c * plane];
    for ni in 0..na {
        let dst = ni * c * plane;
        out[dst..dst + ca * plane].copy_from_slice(&ad[ni * ca * plane..(ni + 1) * ca * plane]);
        out[dst + ca * plane..dst + c * plane]
            .copy_from_slice(&bd[ni * cb * plane..(ni + 1) * cb * plane]);
    }
    finish_op(
        OpKind::ConcatChannels { c_a: ca },
        &[a, b],
        vec![na, c, ha, wa],
        out,
    )
}

/// Channel slice `[from, to)`.
pub fn slice_channels<T: Scalar>(
    x: &Tensor<T>,
    from: usize,
    to: usize,
) -> Result<Tensor<T>, TensorError> {
    let (n, c, h, w) = x.dims4()?;
    if from > to || to > c {
        return Err(TensorError::InvalidArgument(format!(
            "slice_channels range {from}..{to} out of bounds for {c} channels"
        )));
    }
    let plane = h * w;
    let ck = to - from;
    let xd = x.data();
    let mut out = vec![T::ZERO; n * ck * plane];
    for ni in 0..n {
        let src = ni * c * plane + from * plane;
        let dst = ni * ck * plane;
        out[dst..dst + ck * plane].copy_from_slice(&xd[src..src + ck * plane]);
    }
    finish_op(
        OpKind::SliceChannels { from, to },
        &[x],
        vec![n, ck, h, w],
        out,
    )
}
