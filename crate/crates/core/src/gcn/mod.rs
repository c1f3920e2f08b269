//! Multi-head graph convolutional network over skeleton sequences.

pub mod model;
pub mod prune;
pub mod skeleton;
pub mod train;

pub use model::{GcnHyper, GcnIndexMap, GcnMask, GcnModel, ParamId};
pub use prune::{gcn_consistency, prune_gcn, trim_gcn};
pub use skeleton::{synth_dataset, temporal_chunking, ChunkedGraphSignal, SkeletonDataset, SkeletonSequence, SynthParams};
pub use train::{evaluate, featurize, train, LabeledSignal, TrainConfig};
