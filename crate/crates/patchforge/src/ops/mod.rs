//! Differentiable tensor operations.
//!
//! Every function here computes its value eagerly and, when an input is
//! graph-linked with gradients requested somewhere beneath it, records a
//! node for the backward sweep. Backward contributions are built from these
//! same functions, which is what makes second-order gradients work.

mod compose;
mod conv;
mod elementwise;
mod linear;
mod pool;
mod reduce;

pub use compose::*;
pub use conv::*;
pub use elementwise::*;
pub use linear::*;
pub use pool::*;
pub use reduce::*;

use std::sync::Arc;

use crate::error::TensorError;
use crate::graph::{Graph, Node, NodeId, OpKind};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Finish an op: wrap the computed value and record a node when any input
/// is graph-linked and requires gradients. Inputs from different graphs are
/// rejected.
pub(crate) fn finish_op<T: Scalar>(
    op: OpKind<T>,
    inputs: &[&Tensor<T>],
    shape: Vec<usize>,
    data: Vec<T>,
) -> Result<Tensor<T>, TensorError> {
    let mut graph: Option<Graph<T>> = None;
    for t in inputs {
        if let Some(node) = &t.node {
            match &graph {
                None => graph = Some(node.graph.clone()),
                Some(g) => {
                    if !g.same(&node.graph) {
                        return Err(TensorError::GraphMismatch);
                    }
                }
            }
        }
    }
    let data = Arc::new(data);
    let Some(graph) = graph else {
        return Ok(Tensor::from_parts(shape, data));
    };
    let requires = inputs.iter().any(|t| {
        t.node
            .as_ref()
            .is_some_and(|n| n.graph.node_requires_grad(n.id))
    });
    if !requires {
        return Ok(Tensor::from_parts(shape, data));
    }
    let parents: Vec<NodeId> = inputs
        .iter()
        .map(|t| match &t.node {
            Some(n) => n.id,
            None => graph.push(Node {
                op: OpKind::Leaf,
                parents: Vec::new(),
                shape: t.shape().to_vec(),
                data: t.storage(),
                requires_grad: false,
            }),
        })
        .collect();
    let id = graph.push(Node {
        op,
        parents,
        shape: shape.clone(),
        data: Arc::clone(&data),
        requires_grad: true,
    });
    Ok(Tensor::with_node(
        shape,
        data,
        crate::tensor::NodeRef { graph, id },
    ))
}

/// Backward rule for one recorded node: contributions to each parent that
/// requires gradients, computed through the public ops so that `track`
/// (create_graph) records the backward pass itself.
pub(crate) fn backward_op<T: Scalar>(
    graph: &Graph<T>,
    id: NodeId,
    gout: &Tensor<T>,
    track: bool,
) -> Result<Vec<(NodeId, Tensor<T>)>, TensorError> {
    enum Payload<T: Scalar> {
        None,
        Scalar(T),
        Axes(Vec<usize>),
        Shape(Vec<usize>),
        Flags(bool, bool),
        Labels(Arc<Vec<usize>>),
        ConvDims(usize, usize),
        Mask(Arc<Vec<T>>),
        Channels(usize),
        ChannelRange(usize, usize),
    }
    enum Kind {
        Leaf,
        Add,
        Sub,
        Mul,
        Div,
        Neg,
        Scale,
        AddScalar,
        Sqrt,
        Exp,
        Ln,
        SumAll,
        MeanAll,
        SumAxes,
        Broadcast,
        Reshape,
        MatMul,
        GatherRows,
        ScatterRows,
        Conv2d,
        ConvInputGrad,
        ConvWeightGrad,
        MulMask,
        AvgPool2x2,
        Upsample2x,
        ConcatChannels,
        SliceChannels,
    }

    let (kind, payload, parents) = graph.with_node_op(id, |node| {
        let (kind, payload) = match &node.op {
            OpKind::Leaf => (Kind::Leaf, Payload::None),
            OpKind::Add => (Kind::Add, Payload::None),
            OpKind::Sub => (Kind::Sub, Payload::None),
            OpKind::Mul => (Kind::Mul, Payload::None),
            OpKind::Div => (Kind::Div, Payload::None),
            OpKind::Neg => (Kind::Neg, Payload::None),
            OpKind::Scale(c) => (Kind::Scale, Payload::Scalar(*c)),
            OpKind::AddScalar(_) => (Kind::AddScalar, Payload::None),
            OpKind::Sqrt => (Kind::Sqrt, Payload::None),
            OpKind::Exp => (Kind::Exp, Payload::None),
            OpKind::Ln => (Kind::Ln, Payload::None),
            OpKind::SumAll => (Kind::SumAll, Payload::None),
            OpKind::MeanAll => (Kind::MeanAll, Payload::None),
            OpKind::SumAxes { axes } => (Kind::SumAxes, Payload::Axes(axes.clone())),
            OpKind::Broadcast { from } => (Kind::Broadcast, Payload::Shape(from.clone())),
            OpKind::Reshape { from } => (Kind::Reshape, Payload::Shape(from.clone())),
            OpKind::MatMul { ta, tb } => (Kind::MatMul, Payload::Flags(*ta, *tb)),
            OpKind::GatherRows { labels } => (Kind::GatherRows, Payload::Labels(Arc::clone(labels))),
            OpKind::ScatterRows { labels } => {
                (Kind::ScatterRows, Payload::Labels(Arc::clone(labels)))
            }
            OpKind::Conv2d { stride, pad } => (Kind::Conv2d, Payload::ConvDims(*stride, *pad)),
            OpKind::ConvInputGrad { stride, pad } => {
                (Kind::ConvInputGrad, Payload::ConvDims(*stride, *pad))
            }
            OpKind::ConvWeightGrad { stride, pad } => {
                (Kind::ConvWeightGrad, Payload::ConvDims(*stride, *pad))
            }
            OpKind::MulMask { mask } => (Kind::MulMask, Payload::Mask(Arc::clone(mask))),
            OpKind::AvgPool2x2 => (Kind::AvgPool2x2, Payload::None),
            OpKind::Upsample2x => (Kind::Upsample2x, Payload::None),
            OpKind::ConcatChannels { c_a } => (Kind::ConcatChannels, Payload::Channels(*c_a)),
            OpKind::SliceChannels { from, to } => {
                (Kind::SliceChannels, Payload::ChannelRange(*from, *to))
            }
        };
        (kind, payload, node.parents.clone())
    });

    let needs: Vec<bool> = parents
        .iter()
        .map(|&p| graph.node_requires_grad(p))
        .collect();
    let parent = |i: usize| graph.handle(parents[i], track);
    let mut out: Vec<(NodeId, Tensor<T>)> = Vec::with_capacity(2);
    let mut push = |slot: usize, t: Tensor<T>| out.push((parents[slot], t));

    match kind {
        Kind::Leaf => {}
        Kind::Add => {
            if needs[0] {
                push(0, gout.clone());
            }
            if needs[1] {
                push(1, gout.clone());
            }
        }
        Kind::Sub => {
            if needs[0] {
                push(0, gout.clone());
            }
            if needs[1] {
                push(1, neg(gout));
            }
        }
        Kind::Mul => {
            if needs[0] {
                push(0, mul(gout, &parent(1))?);
            }
            if needs[1] {
                push(1, mul(gout, &parent(0))?);
            }
        }
        Kind::Div => {
            let b = parent(1);
            if needs[0] {
                push(0, div(gout, &b)?);
            }
            if needs[1] {
                let out_handle = graph.handle(id, track);
                push(1, neg(&div(&mul(gout, &out_handle)?, &b)?));
            }
        }
        Kind::Neg => {
            if needs[0] {
                push(0, neg(gout));
            }
        }
        Kind::Scale => {
            if needs[0] {
                let Payload::Scalar(c) = payload else {
                    unreachable!()
                };
                push(0, scale(gout, c));
            }
        }
        Kind::AddScalar => {
            if needs[0] {
                push(0, gout.clone());
            }
        }
        Kind::Sqrt => {
            if needs[0] {
                let out_handle = graph.handle(id, track);
                push(0, scale(&div(gout, &out_handle)?, T::from_f64(0.5)));
            }
        }
        Kind::Exp => {
            if needs[0] {
                let out_handle = graph.handle(id, track);
                push(0, mul(gout, &out_handle)?);
            }
        }
        Kind::Ln => {
            if needs[0] {
                push(0, div(gout, &parent(0))?);
            }
        }
        Kind::SumAll | Kind::SumAxes => {
            if needs[0] {
                push(0, broadcast_to(gout, parent(0).shape())?);
            }
        }
        Kind::MeanAll => {
            if needs[0] {
                let p = parent(0);
                let inv = T::ONE / T::from_f64(p.numel() as f64);
                push(0, broadcast_to(&scale(gout, inv), p.shape())?);
            }
        }
        Kind::Broadcast => {
            if needs[0] {
                let Payload::Shape(from) = payload else {
                    unreachable!()
                };
                push(0, reduce_to(gout, &from)?);
            }
        }
        Kind::Reshape => {
            if needs[0] {
                let Payload::Shape(from) = payload else {
                    unreachable!()
                };
                push(0, reshape(gout, &from)?);
            }
        }
        Kind::MatMul => {
            let Payload::Flags(ta, tb) = payload else {
                unreachable!()
            };
            let (a, b) = (parent(0), parent(1));
            match (ta, tb) {
                (false, false) => {
                    if needs[0] {
                        push(0, matmul_tt(gout, &b, false, true)?);
                    }
                    if needs[1] {
                        push(1, matmul_tt(&a, gout, true, false)?);
                    }
                }
                (true, false) => {
                    if needs[0] {
                        push(0, matmul_tt(&b, gout, false, true)?);
                    }
                    if needs[1] {
                        push(1, matmul_tt(&a, gout, false, false)?);
                    }
                }
                (false, true) => {
                    if needs[0] {
                        push(0, matmul_tt(gout, &b, false, false)?);
                    }
                    if needs[1] {
                        push(1, matmul_tt(gout, &a, true, false)?);
                    }
                }
                (true, true) => {
                    if needs[0] {
                        push(0, matmul_tt(&b, gout, true, true)?);
                    }
                    if needs[1] {
                        push(1, matmul_tt(gout, &a, true, true)?);
                    }
                }
            }
        }
        Kind::GatherRows => {
            if needs[0] {
                let Payload::Labels(labels) = payload else {
                    unreachable!()
                };
                let cols = parent(0).shape()[1];
                push(0, scatter_rows(gout, &labels, cols)?);
            }
        }
        Kind::ScatterRows => {
            if needs[0] {
                let Payload::Labels(labels) = payload else {
                    unreachable!()
                };
                push(0, gather_rows(gout, &labels)?);
            }
        }
        Kind::Conv2d => {
            let Payload::ConvDims(stride, pad) = payload else {
                unreachable!()
            };
            let (x, w) = (parent(0), parent(1));
            if needs[0] {
                let (_, _, ih, iw) = x.dims4()?;
                push(0, conv2d_input_grad(gout, &w, (ih, iw), stride, pad)?);
            }
            if needs[1] {
                let (_, _, kh, kw) = w.dims4()?;
                push(1, conv2d_weight_grad(&x, gout, (kh, kw), stride, pad)?);
            }
        }
        Kind::ConvInputGrad => {
            let Payload::ConvDims(stride, pad) = payload else {
                unreachable!()
            };
            let (gy, w) = (parent(0), parent(1));
            if needs[0] {
                push(0, conv2d_nobias(gout, &w, stride, pad)?);
            }
            if needs[1] {
                let (_, _, kh, kw) = w.dims4()?;
                push(1, conv2d_weight_grad(gout, &gy, (kh, kw), stride, pad)?);
            }
        }
        Kind::ConvWeightGrad => {
            let Payload::ConvDims(stride, pad) = payload else {
                unreachable!()
            };
            let (x, gy) = (parent(0), parent(1));
            if needs[0] {
                let (_, _, ih, iw) = x.dims4()?;
                push(0, conv2d_input_grad(&gy, gout, (ih, iw), stride, pad)?);
            }
            if needs[1] {
                push(1, conv2d_nobias(&x, gout, stride, pad)?);
            }
        }
        Kind::MulMask => {
            if needs[0] {
                let Payload::Mask(mask) = payload else {
                    unreachable!()
                };
                push(0, mul_mask(gout, &mask));
            }
        }
        Kind::AvgPool2x2 => {
            if needs[0] {
                push(0, scale(&upsample_nearest_2x(gout)?, T::from_f64(0.25)));
            }
        }
        Kind::Upsample2x => {
            if needs[0] {
                push(0, scale(&avg_pool_2x2(gout)?, T::from_f64(4.0)));
            }
        }
        Kind::ConcatChannels => {
            let Payload::Channels(c_a) = payload else {
                unreachable!()
            };
            let c_total = gout.shape()[1];
            if needs[0] {
                push(0, slice_channels(gout, 0, c_a)?);
            }
            if needs[1] {
                push(1, slice_channels(gout, c_a, c_total)?);
            }
        }
        Kind::SliceChannels => {
            if needs[0] {
                let Payload::ChannelRange(from, to) = payload else {
                    unreachable!()
                };
                let p = parent(0);
                let (n, c_in, h, w) = p.dims4()?;
                let left = Tensor::zeros(&[n, from, h, w]);
                let right = Tensor::zeros(&[n, c_in - to, h, w]);
                let mid = concat_channels(&left, gout)?;
                push(0, concat_channels(&mid, &right)?);
            }
        }
    }
    Ok(out)
}
