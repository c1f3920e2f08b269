//! Topologically consistent magnitude pruning.
//!
//! Masks produced by [`pruner::tc_mp`] keep only connections that lie on a
//! complete input-to-output chain, so every kept weight is reachable from the
//! input and contributes to the output. The crate also carries the standard
//! and sampled magnitude-pruning baselines, reachability analysis of arbitrary
//! masks, a small multi-head graph convolutional network with masked
//! fine-tuning, and an experiment harness that sweeps pruning settings.

pub mod error;
pub mod gcn;
pub mod harness;
pub mod linalg;
pub mod network;
pub mod pruner;
pub mod surrogate;
pub mod textfmt;
pub mod topology;

pub use error::{Error, Result};
pub use linalg::{BoolMatrix, DenseMatrix};
pub use network::{Activation, LayeredNetwork, MaskTensor, PruningBudget};
pub use pruner::{PruneSpec, Scoring};
pub use topology::ConsistencyReport;
