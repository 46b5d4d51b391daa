//! Zero-shot RGB-D instance segmentation by learned superpixel merging.
//!
//! The pipeline over-segments the color and depth images separately with
//! SLIC, intersects both partitions into a patch map, describes each patch by
//! color, position, depth and surface normal (plus optional implicit features
//! from a sidecar file), classifies every adjacent patch pair as merge / cut
//! with a small MLP, and reads instances off the connected components of the
//! kept edges.
//!
//! Besides the pipeline the crate carries the evaluation protocol
//! ([`metrics`]), a procedural tabletop scene generator ([`synthgen`]) and
//! zero-shot class-split tooling ([`zsplit`]).

pub mod error;
pub mod imagery;
pub mod metrics;
pub mod patch_graph;
pub mod pipeline;
pub mod superpixel;
pub mod synthgen;
pub mod tinynet;
pub mod zsplit;

pub use error::{Error, Result};
