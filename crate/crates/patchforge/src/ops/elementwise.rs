use std::sync::Arc;

use crate::error::TensorError;
use crate::graph::OpKind;
use crate::ops::finish_op;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn same_shape<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, op: &str) -> Result<(), TensorError> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch(format!(
            "{op}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn zip_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Vec<T> {
    a.data()
        .iter()
        .zip(b.data().iter())
        .map(|(&x, &y)| f(x, y))
        .collect()
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    same_shape(a, b, "add")?;
    finish_op(
        OpKind::Add,
        &[a, b],
        a.shape().to_vec(),
        zip_map(a, b, |x, y| x + y),
    )
}

pub fn sub<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    same_shape(a, b, "sub")?;
    finish_op(
        OpKind::Sub,
        &[a, b],
        a.shape().to_vec(),
        zip_map(a, b, |x, y| x - y),
    )
}

pub fn mul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    same_shape(a, b, "mul")?;
    finish_op(
        OpKind::Mul,
        &[a, b],
        a.shape().to_vec(),
        zip_map(a, b, |x, y| x * y),
    )
}

pub fn div<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    same_shape(a, b, "div")?;
    finish_op(
        OpKind::Div,
        &[a, b],
        a.shape().to_vec(),
        zip_map(a, b, |x, y| x / y),
    )
}

pub fn neg<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    finish_op(
        OpKind::Neg,
        &[a],
        a.shape().to_vec(),
        a.data().iter().map(|&x| -x).collect(),
    )
    .expect("neg is infallible")
}

pub fn scale<T: Scalar>(a: &Tensor<T>, c: T) -> Tensor<T> {
    finish_op(
        OpKind::Scale(c),
        &[a],
        a.shape().to_vec(),
        a.data().iter().map(|&x| x * c).collect(),
    )
    .expect("scale is infallible")
}

pub fn add_scalar<T: Scalar>(a: &Tensor<T>, c: T) -> Tensor<T> {
    finish_op(
        OpKind::AddScalar(c),
        &[a],
        a.shape().to_vec(),
        a.data().iter().map(|&x| x + c).collect(),
    )
    .expect("add_scalar is infallible")
}

pub fn sqrt<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    finish_op(
        OpKind::Sqrt,
        &[a],
        a.shape().to_vec(),
        a.data().iter().map(|&x| x.sqrt()).collect(),
    )
    .expect("sqrt is infallible")
}

pub fn exp<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    finish_op(
        OpKind::Exp,
        &[a],
        a.shape().to_vec(),
        a.data().iter().map(|&x| x.exp()).collect(),
    )
    .expect("exp is infallible")
}

pub fn ln<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    finish_op(
        OpKind::Ln,
        &[a],
        a.shape().to_vec(),
        a.data().iter().map(|&x| x.ln()).collect(),
    )
    .expect("ln is infallible")
}

/// Elementwise product with a constant mask. The mask never receives
/// gradients, which encodes the piecewise-linear structure of the
/// rectifier activations.
pub(crate) fn mul_mask<T: Scalar>(a: &Tensor<T>, mask: &Arc<Vec<T>>) -> Tensor<T> {
    debug_assert_eq!(a.numel(), mask.len());
    finish_op(
        OpKind::MulMask {
            mask: Arc::clone(mask),
        },
        &[a],
        a.shape().to_vec(),
        a.data()
            .iter()
            .zip(mask.iter())
            .map(|(&x, &m)| x * m)
            .collect(),
    )
    .expect("mul_mask is infallible")
}

/// LeakyReLU: identity for non-negative inputs, `slope`-scaled otherwise.
/// The subgradient at zero is taken as 1.
pub fn leaky_relu<T: Scalar>(a: &Tensor<T>, slope: T) -> Result<Tensor<T>, TensorError> {
    let s = slope.to_f64();
    if !(0.0 < s && s < 1.0) {
        return Err(TensorError::InvalidArgument(format!(
            "leaky_relu slope must lie in (0,1), got {s}"
        )));
    }
    let mask: Arc<Vec<T>> = Arc::new(
        a.data()
            .iter()
            .map(|&x| if x >= T::ZERO { T::ONE } else { slope })
            .collect(),
    );
    Ok(mul_mask(a, &mask))
}

/// ReLU with subgradient 1 at zero.
pub fn relu<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    let mask: Arc<Vec<T>> = Arc::new(
        a.data()
            .iter()
            .map(|&x| if x >= T::ZERO { T::ONE } else { T::ZERO })
            .collect(),
    );
    mul_mask(a, &mask)
}
