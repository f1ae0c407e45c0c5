use crate::error::TensorError;
use crate::graph::OpKind;
use crate::ops::finish_op;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn sum_all<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    let total: T = a.data().iter().copied().sum();
    finish_op(OpKind::SumAll, &[a], vec![], vec![total]).expect("sum_all is infallible")
}

pub fn mean_all<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    let total: T = a.data().iter().copied().sum();
    let mean = total / T::from_f64(a.numel() as f64);
    finish_op(OpKind::MeanAll, &[a], vec![], vec![mean]).expect("mean_all is infallible")
}

/// Sum over the given axes, keeping them as extent-1 dims.
pub fn sum_axes<T: Scalar>(a: &Tensor<T>, axes: &[usize]) -> Result<Tensor<T>, TensorError> {
    let rank = a.shape().len();
    for &ax in axes {
        if ax >= rank {
            return Err(TensorError::InvalidArgument(format!(
                "sum axis {ax} out of range for rank {rank}"
            )));
        }
    }
    let mut out_shape = a.shape().to_vec();
    for &ax in axes {
        out_shape[ax] = 1;
    }
    let out_len: usize = out_shape.iter().product();
    let mut out = vec![T::ZERO; out_len];

    let in_shape = a.shape();
    let in_strides = strides(in_shape);
    let out_strides = strides(&out_shape);
    let mut idx = vec![0usize; rank];
    for &v in a.data() {
        let mut off = 0;
        for d in 0..rank {
            if out_shape[d] != 1 {
                off += idx[d] * out_strides[d];
            }
        }
        out[off] += v;
        // advance multi-index
        for d in (0..rank).rev() {
            idx[d] += 1;
            if idx[d] < in_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    let _ = in_strides;
    finish_op(
        OpKind::SumAxes {
            axes: axes.to_vec(),
        },
        &[a],
        out_shape,
        out,
    )
}

/// Mean over the given axes, keeping them as extent-1 dims.
pub fn mean_axes<T: Scalar>(a: &Tensor<T>, axes: &[usize]) -> Result<Tensor<T>, TensorError> {
    let mut count = 1usize;
    for &ax in axes {
        count *= a.shape().get(ax).copied().unwrap_or(1);
    }
    let s = sum_axes(a, axes)?;
    Ok(crate::ops::scale(&s, T::ONE / T::from_f64(count as f64)))
}

/// Expand extent-1 axes (after left-padding with 1s) to the target shape.
pub fn broadcast_to<T: Scalar>(a: &Tensor<T>, target: &[usize]) -> Result<Tensor<T>, TensorError> {
    let from = a.shape();
    if from.len() > target.len() {
        return Err(TensorError::ShapeMismatch(format!(
            "cannot broadcast {:?} to {:?}",
            from, target
        )));
    }
    let pad = target.len() - from.len();
    let mut padded = vec![1usize; pad];
    padded.extend_from_slice(from);
    for (d, (&f, &t)) in padded.iter().zip(target.iter()).enumerate() {
        if f != t && f != 1 {
            return Err(TensorError::ShapeMismatch(format!(
                "cannot broadcast {:?} to {:?} (axis {d})",
                from, target
            )));
        }
    }
    let out_len: usize = target.iter().product();
    let mut out = vec![T::ZERO; out_len];
    let src = a.data();
    let src_strides = strides(&padded);
    let rank = target.len();
    let mut idx = vec![0usize; rank];
    for slot in out.iter_mut() {
        let mut off = 0;
        for d in 0..rank {
            if padded[d] != 1 {
                off += idx[d] * src_strides[d];
            }
        }
        *slot = src[off];
        for d in (0..rank).rev() {
            idx[d] += 1;
            if idx[d] < target[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    finish_op(
        OpKind::Broadcast {
            from: from.to_vec(),
        },
        &[a],
        target.to_vec(),
        out,
    )
}

/// Undo a broadcast: sum a tensor of `target` shape back down to `from`.
pub(crate) fn reduce_to<T: Scalar>(g: &Tensor<T>, from: &[usize]) -> Result<Tensor<T>, TensorError> {
    let target = g.shape().to_vec();
    let pad = target.len() - from.len();
    let mut padded = vec![1usize; pad];
    padded.extend_from_slice(from);
    let axes: Vec<usize> = (0..target.len()).filter(|&d| padded[d] == 1).collect();
    let summed = if axes.is_empty() {
        g.clone()
    } else {
        sum_axes(g, &axes)?
    };
    reshape(&summed, from)
}

pub fn reshape<T: Scalar>(a: &Tensor<T>, shape: &[usize]) -> Result<Tensor<T>, TensorError> {
    let new_len: usize = shape.iter().product();
    if new_len != a.numel() {
        return Err(TensorError::ShapeMismatch(format!(
            "cannot reshape {:?} into {:?}",
            a.shape(),
            shape
        )));
    }
    finish_op(
        OpKind::Reshape {
            from: a.shape().to_vec(),
        },
        &[a],
        shape.to_vec(),
        a.data().to_vec(),
    )
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        s[d] = s[d + 1] * shape[d + 1];
    }
    s
}
