//! patchforge: multi-scale GAN synthesis of labeled image patches and
//! residual-network evaluation of how close the synthetic corpus comes to
//! the real one.
//!
//! The crate is built around a small reverse-mode autodiff engine with
//! second-order support ([`graph`], [`ops`]), a multi-scale
//! generator/discriminator pair ([`msggan`]), a WGAN-GP training loop
//! ([`gan`]), a patch-dataset pipeline ([`data`]), a compact residual
//! classifier with a frozen-backbone transfer protocol ([`classifier`]),
//! and the experiment matrix plus metric reporting ([`experiment`],
//! [`metrics`]).
//!
//! The accompanying guide under `book/` walks through each layer with
//! runnable snippets.

pub mod error;
pub mod graph;
pub mod ops;
pub mod scalar;
pub mod tensor;

pub use graph::{grad, GradOptions, Graph};
pub use scalar::Scalar;
pub use tensor::Tensor;
