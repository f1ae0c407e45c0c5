use std::sync::Arc;

use crate::error::TensorError;
use crate::graph::OpKind;
use crate::ops::{broadcast_to, finish_op, reshape};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// 2-D matrix product `op(a) · op(b)` with optional transposes.
pub fn matmul_tt<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    ta: bool,
    tb: bool,
) -> Result<Tensor<T>, TensorError> {
    let (ar, ac) = a.dims2()?;
    let (br, bc) = b.dims2()?;
    let (m, k1) = if ta { (ac, ar) } else { (ar, ac) };
    let (k2, n) = if tb { (bc, br) } else { (br, bc) };
    if k1 != k2 {
        return Err(TensorError::ShapeMismatch(format!(
            "matmul inner dims: {:?}(t={}) vs {:?}(t={})",
            a.shape(),
            ta,
            b.shape(),
            tb
        )));
    }
    let ad = a.data();
    let bd = b.data();
    let h = k1;
    let mut out = vec![T::ZERO; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = T::ZERO;
            for k in 0..h {
                let av = if ta { ad[k * ac + i] } else { ad[i * ac + k] };
                let bv = if tb { bd[j * bc + k] } else { bd[k * bc + j] };
                acc += av * bv;
            }
            out[i * n + j] = acc;
        }
    }
    finish_op(OpKind::MatMul { ta, tb }, &[a, b], vec![m, n], out)
}

pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    matmul_tt(a, b, false, false)
}

/// Affine map `x·W + b` for `x: N×F`, `W: F×K`, `b: K`.
pub fn dense<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>, TensorError> {
    let (_, f) = x.dims2()?;
    let (wf, k) = weight.dims2()?;
    if f != wf || bias.shape() != [k] {
        return Err(TensorError::ShapeMismatch(format!(
            "dense: x {:?}, weight {:?}, bias {:?}",
            x.shape(),
            weight.shape(),
            bias.shape()
        )));
    }
    let prod = matmul(x, weight)?;
    let b_row = reshape(bias, &[1, k])?;
    let b_full = broadcast_to(&b_row, prod.shape())?;
    crate::ops::add(&prod, &b_full)
}

/// Pick one column per row: `out[n] = a[n, labels[n]]`, shape N×1.
pub fn gather_rows<T: Scalar>(
    a: &Tensor<T>,
    labels: &Arc<Vec<usize>>,
) -> Result<Tensor<T>, TensorError> {
    let (n, k) = a.dims2()?;
    if labels.len() != n {
        return Err(TensorError::ShapeMismatch(format!(
            "gather_rows: {} labels for {} rows",
            labels.len(),
            n
        )));
    }
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(TensorError::InvalidArgument(format!(
                "label {l} out of range [0,{k}) at row {i}"
            )));
        }
    }
    let data = a.data();
    let out: Vec<T> = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| data[i * k + l])
        .collect();
    finish_op(
        OpKind::GatherRows {
            labels: Arc::clone(labels),
        },
        &[a],
        vec![n, 1],
        out,
    )
}

/// Adjoint of [`gather_rows`]: spread `a: N×1` into an N×`cols` tensor of
/// zeros at the labeled columns.
pub fn scatter_rows<T: Scalar>(
    a: &Tensor<T>,
    labels: &Arc<Vec<usize>>,
    cols: usize,
) -> Result<Tensor<T>, TensorError> {
    let (n, one) = a.dims2()?;
    if one != 1 || labels.len() != n {
        return Err(TensorError::ShapeMismatch(format!(
            "scatter_rows: input {:?}, {} labels",
            a.shape(),
            labels.len()
        )));
    }
    let mut out = vec![T::ZERO; n * cols];
    for (i, &l) in labels.iter().enumerate() {
        out[i * cols + l] = a.data()[i];
    }
    finish_op(
        OpKind::ScatterRows {
            labels: Arc::clone(labels),
        },
        &[a],
        vec![n, cols],
        out,
    )
}
