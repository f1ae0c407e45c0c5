//! Dense row-major tensors with optional gradient-graph linkage.
//!
//! A [`Tensor`] is a shape plus shared storage. When it carries a node link
//! it participates in reverse-mode differentiation (see [`crate::graph`]);
//! detached tensors are plain immutable values.

use std::sync::Arc;

use crate::error::TensorError;
use crate::graph::{Graph, NodeId};
use crate::scalar::Scalar;

/// Dense N-dimensional array, row-major, NCHW for image tensors.
#[derive(Clone)]
pub struct Tensor<T: Scalar> {
    shape: Vec<usize>,
    data: Arc<Vec<T>>,
    pub(crate) node: Option<NodeRef<T>>,
}

/// Link from a tensor into its gradient graph.
#[derive(Clone)]
pub(crate) struct NodeRef<T: Scalar> {
    pub graph: Graph<T>,
    pub id: NodeId,
}

impl<T: Scalar> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("tracked", &self.node.is_some())
            .finish()
    }
}

impl<T: Scalar> Tensor<T> {
    /// Build a tensor from explicit shape and row-major data.
    ///
    /// Panics if `product(shape) != data.len()`; that invariant is not
    /// recoverable and always indicates a programming error.
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {:?} does not match {} elements",
            shape,
            data.len()
        );
        Tensor {
            shape: shape.to_vec(),
            data: Arc::new(data),
            node: None,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::ZERO)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::ONE)
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self::from_vec(shape, vec![value; shape.iter().product()])
    }

    /// Rank-0 tensor holding one value.
    pub fn scalar(value: T) -> Self {
        Self::from_vec(&[], vec![value])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub(crate) fn storage(&self) -> Arc<Vec<T>> {
        Arc::clone(&self.data)
    }

    /// The single value of a rank-0 or one-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    /// Same values without graph linkage. A detached tensor never
    /// accumulates gradient.
    pub fn detach(&self) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: Arc::clone(&self.data),
            node: None,
        }
    }

    pub fn is_tracked(&self) -> bool {
        self.node.is_some()
    }

    /// Whether gradients are requested anywhere beneath this tensor.
    pub fn requires_grad(&self) -> bool {
        match &self.node {
            Some(n) => n.graph.node_requires_grad(n.id),
            None => false,
        }
    }

    pub fn is_scalar_shape(&self) -> bool {
        self.numel() == 1 && self.shape.is_empty()
    }

    /// Interpret as NCHW; errors on other ranks.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize), TensorError> {
        match self.shape.as_slice() {
            [n, c, h, w] => Ok((*n, *c, *h, *w)),
            other => Err(TensorError::ShapeMismatch(format!(
                "expected a rank-4 NCHW tensor, got shape {:?}",
                other
            ))),
        }
    }

    pub fn dims2(&self) -> Result<(usize, usize), TensorError> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            other => Err(TensorError::ShapeMismatch(format!(
                "expected a rank-2 tensor, got shape {:?}",
                other
            ))),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn with_node(shape: Vec<usize>, data: Arc<Vec<T>>, node: NodeRef<T>) -> Self {
        Tensor {
            shape,
            data,
            node: Some(node),
        }
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Arc<Vec<T>>) -> Self {
        Tensor {
            shape,
            data,
            node: None,
        }
    }
}

/// Convert between element types (used when moving fp64 test tensors to
/// fp32 training parameters and back). Drops graph linkage.
pub fn cast<A: Scalar, B: Scalar>(t: &Tensor<A>) -> Tensor<B> {
    Tensor::from_vec(
        t.shape(),
        t.data().iter().map(|v| B::from_f64(v.to_f64())).collect(),
    )
}
