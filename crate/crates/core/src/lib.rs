//! Siamese community-preserving graph convolutions (SCP-GCN) for joint
//! embedding of paired structural and functional networks.
//!
//! The crate is `no_std` and only needs an allocator. File formats, the
//! command-line interface and parallel job scheduling live in the `scpgcn`
//! companion crate.
//!
//! Pipeline overview:
//!
//! 1. [`graph`] turns each subject's structural adjacency into the
//!    renormalized propagation operator used by the convolutions.
//! 2. [`community`] partitions the structural network with normalized-cut
//!    spectral clustering.
//! 3. [`model`] holds the two-layer GCN encoder with a per-node dense output
//!    layer, and the contrastive / community-preserving losses.
//! 4. [`training`] builds subject pairs, backpropagates the total loss and
//!    runs Adam.
//! 5. [`eval`] fits a logistic classifier on graph embeddings and runs the
//!    repeated-split experiments, ablations and grid searches.
#![no_std]
// `!(x > 0.0)` is used on purpose: it rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod community;
pub mod error;
pub mod eval;
pub mod graph;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod synthdata;
pub mod training;

pub use error::{Error, Result};
pub use linalg::Matrix;
