//! Layer-level operations built by composing the primitive ops, so their
//! backward passes (and backward-of-backward) come from the composition.

use std::sync::Arc;

use crate::error::TensorError;
use crate::ops::{
    add, add_scalar, broadcast_to, concat_channels, div, exp, gather_rows, ln, mean_all,
    mean_axes, mul, reshape, scale, sqrt, sub, sum_axes,
};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Append one channel holding the batch-wide mean standard deviation.
///
/// The appended value is the scalar mean over channels and positions of the
/// per-position population standard deviation across the batch, computed as
/// `sqrt(var + eps)`, replicated to every pixel of the new channel.
pub fn minibatch_stddev<T: Scalar>(x: &Tensor<T>, eps: T) -> Result<Tensor<T>, TensorError> {
    let (n, _c, h, w) = x.dims4()?;
    if n < 1 {
        return Err(TensorError::InvalidArgument(
            "minibatch_stddev needs at least one sample".into(),
        ));
    }
    let mean_b = mean_axes(x, &[0])?;
    let diff = sub(x, &broadcast_to(&mean_b, x.shape())?)?;
    let var = mean_axes(&mul(&diff, &diff)?, &[0])?;
    let std = sqrt(&add_scalar(&var, eps));
    let s = mean_all(&std);
    let chan = broadcast_to(&reshape(&s, &[1, 1, 1, 1])?, &[n, 1, h, w])?;
    concat_channels(x, &chan)
}

/// Batch normalization over (N, H, W) per channel using batch statistics.
/// Returns the normalized tensor plus the detached batch mean and
/// population variance (both `[C]`) for running-stat updates.
pub fn batch_norm_train<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: T,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>), TensorError> {
    let (n, c, h, w) = x.dims4()?;
    if n * h * w < 2 {
        return Err(TensorError::InvalidArgument(format!(
            "batch norm in train mode needs N*H*W >= 2, got {}",
            n * h * w
        )));
    }
    check_affine(gamma, beta, c)?;
    let mean = mean_axes(x, &[0, 2, 3])?;
    let diff = sub(x, &broadcast_to(&mean, x.shape())?)?;
    let var = mean_axes(&mul(&diff, &diff)?, &[0, 2, 3])?;
    let denom = sqrt(&add_scalar(&var, eps));
    let normed = div(&diff, &broadcast_to(&denom, x.shape())?)?;
    let y = affine_channels(&normed, gamma, beta)?;
    let mean_c = reshape(&mean, &[c])?.detach();
    let var_c = reshape(&var, &[c])?.detach();
    Ok((y, mean_c, var_c))
}

/// Batch normalization with fixed running statistics:
/// `(x − m)/sqrt(v + eps) · γ + β`.
pub fn batch_norm_eval<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    eps: T,
) -> Result<Tensor<T>, TensorError> {
    let (_n, c, _h, _w) = x.dims4()?;
    check_affine(gamma, beta, c)?;
    if running_mean.shape() != [c] || running_var.shape() != [c] {
        return Err(TensorError::ShapeMismatch(format!(
            "running stats {:?}/{:?}, expected [{c}]",
            running_mean.shape(),
            running_var.shape()
        )));
    }
    let m4 = reshape(&running_mean.detach(), &[1, c, 1, 1])?;
    let v4 = reshape(&running_var.detach(), &[1, c, 1, 1])?;
    let diff = sub(x, &broadcast_to(&m4, x.shape())?)?;
    let denom = sqrt(&add_scalar(&v4, eps));
    let normed = div(&diff, &broadcast_to(&denom, x.shape())?)?;
    affine_channels(&normed, gamma, beta)
}

fn check_affine<T: Scalar>(gamma: &Tensor<T>, beta: &Tensor<T>, c: usize) -> Result<(), TensorError> {
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(TensorError::ShapeMismatch(format!(
            "gamma {:?} / beta {:?}, expected [{c}]",
            gamma.shape(),
            beta.shape()
        )));
    }
    Ok(())
}

fn affine_channels<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
) -> Result<Tensor<T>, TensorError> {
    let c = x.shape()[1];
    let g4 = broadcast_to(&reshape(gamma, &[1, c, 1, 1])?, x.shape())?;
    let b4 = broadcast_to(&reshape(beta, &[1, c, 1, 1])?, x.shape())?;
    add(&mul(x, &g4)?, &b4)
}

/// Mean cross entropy of softmax-normalized logits against integer labels,
/// stabilized by max subtraction.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<Tensor<T>, TensorError> {
    let (n, k) = logits.dims2()?;
    if labels.len() != n {
        return Err(TensorError::ShapeMismatch(format!(
            "{} labels for {n} rows",
            labels.len()
        )));
    }
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(TensorError::InvalidArgument(format!(
                "label {l} out of range [0,{k}) at row {i}"
            )));
        }
    }
    // Row maxima as a constant shift: the log-sum-exp value is exact and its
    // gradient is unaffected by a detached constant offset.
    let rowmax = row_max(logits);
    let shifted = sub(logits, &broadcast_to(&rowmax, logits.shape())?)?;
    let se = sum_axes(&exp(&shifted), &[1])?;
    let lse = add(&ln(&se), &rowmax)?;
    let labels = Arc::new(labels.to_vec());
    let picked = gather_rows(logits, &labels)?;
    Ok(mean_all(&sub(&lse, &picked)?))
}

/// Softmax over the last axis of an N×K tensor.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let (_n, _k) = logits.dims2()?;
    let rowmax = row_max(logits);
    let e = exp(&sub(logits, &broadcast_to(&rowmax, logits.shape())?)?);
    let se = sum_axes(&e, &[1])?;
    div(&e, &broadcast_to(&se, logits.shape())?)
}

fn row_max<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let (n, k) = (logits.shape()[0], logits.shape()[1]);
    let d = logits.data();
    let mut m = Vec::with_capacity(n);
    for i in 0..n {
        let mut best = d[i * k];
        for j in 1..k {
            best = best.max(d[i * k + j]);
        }
        m.push(best);
    }
    Tensor::from_vec(&[n, 1], m)
}

/// Scale each row of `z: N×d` to Euclidean norm `sqrt(d)` (hypersphere
/// normalization). Zero rows are rejected.
pub fn latent_normalize<T: Scalar>(z: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let (_n, d) = z.dims2()?;
    let n2 = sum_axes(&mul(z, z)?, &[1])?;
    if n2.data().iter().any(|&v| v <= T::ZERO) {
        return Err(TensorError::InvalidArgument(
            "latent row with zero norm cannot be normalized".into(),
        ));
    }
    let norm = sqrt(&n2);
    let scaled = scale(z, T::from_f64((d as f64).sqrt()));
    div(&scaled, &broadcast_to(&norm, z.shape())?)
}
