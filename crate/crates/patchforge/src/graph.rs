//! Reverse-mode gradient graph.
//!
//! Operations append nodes to an ever-growing tape; construction order is a
//! topological order, so the backward pass is a single reverse sweep. The
//! backward pass computes each contribution *through the op functions
//! themselves*, so with [`GradOptions::create_graph`] the sweep records new
//! nodes and the returned gradients can be differentiated again. That is
//! what makes the gradient penalty's grad-of-grad work.

use std::cell::RefCell;
use std::rc::Rc;
use std::sync::Arc;

use crate::error::GradError;
use crate::ops;
use crate::scalar::Scalar;
use crate::tensor::{NodeRef, Tensor};

pub type NodeId = usize;

/// Recorded operation. Payloads hold whatever backward needs beyond the
/// parent values (which stay available on the tape).
pub(crate) enum OpKind<T: Scalar> {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Scale(T),
    AddScalar(T),
    Sqrt,
    Exp,
    Ln,
    SumAll,
    MeanAll,
    SumAxes,
    Broadcast { from: Vec<usize> },
    Reshape { from: Vec<usize> },
    MatMul { ta: bool, tb: bool },
    GatherRows { labels: Arc<Vec<usize>> },
    ScatterRows { labels: Arc<Vec<usize>> },
    Conv2d { stride: usize, pad: usize },
    ConvInputGrad { stride: usize, pad: usize },
    ConvWeightGrad { stride: usize, pad: usize },
    /// Elementwise product with a constant mask (LeakyReLU/ReLU backward).
    MulMask { mask: Arc<Vec<T>> },
    AvgPool2x2,
    Upsample2x,
    ConcatChannels { c_a: usize },
    SliceChannels { from: usize, to: usize },
}

pub(crate) struct Node<T: Scalar> {
    pub op: OpKind<T>,
    pub parents: Vec<NodeId>,
    pub shape: Vec<usize>,
    pub data: Arc<Vec<T>>,
    pub requires_grad: bool,
}

/// Shared handle to a gradient tape. Cloning is cheap; all clones append to
/// the same tape. Single-threaded by construction.
pub struct Graph<T: Scalar> {
    inner: Rc<RefCell<Vec<Node<T>>>>,
}

impl<T: Scalar> Clone for Graph<T> {
    fn clone(&self) -> Self {
        Graph {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            inner: Rc::new(RefCell::new(Vec::new())),
        }
    }

    /// Register a leaf. `requires_grad` marks it as a differentiation target;
    /// plain inputs (data batches) should pass `false`.
    pub fn leaf(&self, value: &Tensor<T>, requires_grad: bool) -> Tensor<T> {
        let id = self.push(Node {
            op: OpKind::Leaf,
            parents: Vec::new(),
            shape: value.shape().to_vec(),
            data: value.storage(),
            requires_grad,
        });
        Tensor::with_node(
            value.shape().to_vec(),
            value.storage(),
            NodeRef {
                graph: self.clone(),
                id,
            },
        )
    }

    /// Leaf that gradients flow *into* (parameters, penalty interpolates).
    pub fn var(&self, value: &Tensor<T>) -> Tensor<T> {
        self.leaf(value, true)
    }

    /// Leaf that gradients flow *through* but never into.
    pub fn constant(&self, value: &Tensor<T>) -> Tensor<T> {
        self.leaf(value, false)
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn same(&self, other: &Graph<T>) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    pub(crate) fn push(&self, node: Node<T>) -> NodeId {
        let mut nodes = self.inner.borrow_mut();
        nodes.push(node);
        nodes.len() - 1
    }

    pub(crate) fn node_requires_grad(&self, id: NodeId) -> bool {
        self.inner.borrow()[id].requires_grad
    }

    pub(crate) fn node_parents(&self, id: NodeId) -> Vec<NodeId> {
        self.inner.borrow()[id].parents.clone()
    }

    pub(crate) fn node_value(&self, id: NodeId) -> (Vec<usize>, Arc<Vec<T>>) {
        let nodes = self.inner.borrow();
        (nodes[id].shape.clone(), Arc::clone(&nodes[id].data))
    }

    /// Rebuild a tensor handle for a recorded node. With `track` the handle
    /// keeps its graph linkage so ops on it are recorded again.
    pub(crate) fn handle(&self, id: NodeId, track: bool) -> Tensor<T> {
        let (shape, data) = self.node_value(id);
        if track {
            Tensor::with_node(
                shape,
                data,
                NodeRef {
                    graph: self.clone(),
                    id,
                },
            )
        } else {
            Tensor::from_parts(shape, data)
        }
    }

    pub(crate) fn with_node_op<R>(&self, id: NodeId, f: impl FnOnce(&Node<T>) -> R) -> R {
        f(&self.inner.borrow()[id])
    }

    /// Every node with a directed path to `target`, as a membership mask.
    fn ancestor_mask(&self, target: NodeId) -> Vec<bool> {
        let nodes = self.inner.borrow();
        let mut mask = vec![false; target + 1];
        mask[target] = true;
        for id in (0..=target).rev() {
            if mask[id] {
                for &p in &nodes[id].parents {
                    mask[p] = true;
                }
            }
        }
        mask
    }
}

/// Options for [`grad`].
#[derive(Clone, Copy, Debug, Default)]
pub struct GradOptions {
    /// Record the backward pass itself so the returned gradients can be
    /// differentiated again.
    pub create_graph: bool,
}

/// Gradient of a scalar objective with respect to each tensor in `wrt`.
///
/// Every `wrt` entry must be graph-linked, marked as a differentiation
/// target, and reachable from the objective; anything else is an explicit
/// error rather than a silent zero.
pub fn grad<T: Scalar>(
    objective: &Tensor<T>,
    wrt: &[&Tensor<T>],
    opts: GradOptions,
) -> Result<Vec<Tensor<T>>, GradError> {
    let obj_node = objective
        .node
        .as_ref()
        .ok_or(GradError::NotInGraph(usize::MAX))?;
    if objective.numel() != 1 {
        return Err(GradError::NonScalarObjective(objective.shape().to_vec()));
    }
    let graph = obj_node.graph.clone();

    let mut wrt_ids = Vec::with_capacity(wrt.len());
    for (i, t) in wrt.iter().enumerate() {
        let node = t.node.as_ref().ok_or(GradError::NotInGraph(i))?;
        if !graph.same(&node.graph) {
            return Err(GradError::NotInGraph(i));
        }
        if node.id > obj_node.id {
            return Err(GradError::NotReachable(i));
        }
        wrt_ids.push(node.id);
    }

    let ancestors = graph.ancestor_mask(obj_node.id);
    for (i, &id) in wrt_ids.iter().enumerate() {
        if !ancestors[id] {
            return Err(GradError::NotReachable(i));
        }
        if !graph.node_requires_grad(id) {
            return Err(GradError::NoPath(i));
        }
    }

    // Seed: d(objective)/d(objective) = 1. A constant even when the backward
    // pass is being recorded.
    let seed_plain = Tensor::full(objective.shape(), T::ONE);
    let seed = if opts.create_graph {
        graph.constant(&seed_plain)
    } else {
        seed_plain
    };

    let keep: std::collections::HashSet<NodeId> = wrt_ids.iter().copied().collect();
    let mut grads: Vec<Option<Tensor<T>>> = vec![None; obj_node.id + 1];
    grads[obj_node.id] = Some(seed);

    for id in (0..=obj_node.id).rev() {
        let Some(gout) = grads[id].clone() else {
            continue;
        };
        if !graph.node_requires_grad(id) {
            grads[id] = None;
            continue;
        }
        let contributions = ops::backward_op(&graph, id, &gout, opts.create_graph)?;
        if !keep.contains(&id) {
            grads[id] = None;
        }
        for (pid, contrib) in contributions {
            let next = match grads[pid].take() {
                None => contrib,
                Some(prev) => ops::add(&prev, &contrib).map_err(GradError::Tensor)?,
            };
            grads[pid] = Some(next);
        }
    }

    let mut out = Vec::with_capacity(wrt.len());
    for (i, &id) in wrt_ids.iter().enumerate() {
        match &grads[id] {
            Some(g) => out.push(g.clone()),
            None => return Err(GradError::NoPath(i)),
        }
    }
    Ok(out)
}
