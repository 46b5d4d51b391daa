//! Patch adjacency graph, per-patch descriptors, ground-truth edge labels and
//! the rebalancing pair sampler used for training.

mod features;
mod graph;
mod normals;
mod sampler;
mod sidecar;

pub use features::{extract_features, FeatureSet, PatchFeatures, EXPLICIT_DIM};
pub use graph::{build_graph, label_edges_from_gt, majority_instances, Edge, PatchGraph};
pub use normals::{compute_normals, depth_gradients};
pub use sampler::{sample_pairs, EdgeSample, PairSampler};
pub use sidecar::{Sidecar, SIDECAR_MAGIC, SIDECAR_VERSION};
