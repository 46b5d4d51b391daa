//! End-to-end orchestration: over-segmentation and graph construction,
//! edge scoring, and instance maps from the connected components of the
//! kept edges.

mod plane;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imagery::{read_gray16, write_gray16, write_json, RgbdFrame};
use crate::patch_graph::{
    build_graph, extract_features, label_edges_from_gt, FeatureSet, PatchGraph, Sidecar,
};
use crate::superpixel::{combine_maps, slic_depth, slic_rgb, SlicConfig, SuperpixelMap};
use crate::tinynet::MlpModel;

pub use plane::{fit_plane, suppress_plane, Plane, DEFAULT_PLANE_TOLERANCE};

pub const DEFAULT_THRESHOLD: f32 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub slic: SlicConfig,
    pub features: FeatureSet,
    /// Edges with merge probability `>= threshold` are kept.
    pub threshold: f32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    /// Read `<id>.spxf` sidecars when present.
    pub use_sidecar: bool,
    /// Set the dominant supporting plane and every segment lying on it to
    /// background (id 0).
    pub suppress_plane: bool,
    /// Normalized-depth distance within which a pixel counts as on the plane.
    pub plane_tolerance: f32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            slic: SlicConfig::default(),
            features: FeatureSet::EXPLICIT,
            threshold: DEFAULT_THRESHOLD,
            checkpoint: None,
            use_sidecar: false,
            suppress_plane: false,
            plane_tolerance: DEFAULT_PLANE_TOLERANCE,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.slic.validate()?;
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        if self.features.is_empty() {
            return Err(Error::Config("feature set is empty".into()));
        }
        if self.features.implicit && !self.use_sidecar {
            return Err(Error::Config("implicit features need sidecar input".into()));
        }
        if !(self.plane_tolerance.is_finite() && self.plane_tolerance > 0.0) {
            return Err(Error::Config("plane tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// One frame reduced to what edge scoring, painting and evaluation need.
#[derive(Clone, Debug)]
pub struct PreparedFrame {
    pub frame_id: String,
    pub map: SuperpixelMap,
    pub graph: PatchGraph,
    pub depth: Vec<f32>,
    pub valid: Vec<bool>,
    pub instance_gt: Option<Vec<u32>>,
    pub class_of_instance: Option<BTreeMap<u32, String>>,
}

impl PreparedFrame {
    /// Graph over an existing patch map; edges are labeled when the frame
    /// carries ground truth.
    pub fn from_map(frame: &RgbdFrame, map: SuperpixelMap, sidecar: Option<&Sidecar>) -> Result<Self> {
        let features = extract_features(frame, &map, sidecar)?;
        let mut graph = build_graph(&map, features)?;
        if let Some(gt) = &frame.instance_gt {
            graph = label_edges_from_gt(graph, &map, gt)?;
        }
        Ok(PreparedFrame {
            frame_id: frame.frame_id.clone(),
            map,
            graph,
            depth: frame.depth.clone(),
            valid: frame.valid.clone(),
            instance_gt: frame.instance_gt.clone(),
            class_of_instance: frame.class_of_instance.clone(),
        })
    }

    pub fn width(&self) -> usize {
        self.map.width()
    }

    pub fn height(&self) -> usize {
        self.map.height()
    }

    /// Ground-truth merge label of every edge as a probability (1 or 0).
    pub fn oracle_probabilities(&self) -> Result<Vec<f32>> {
        self.graph
            .edges
            .iter()
            .map(|e| {
                e.gt.map(|l| if l { 1.0 } else { 0.0 })
                    .ok_or_else(|| Error::InvalidFrame(format!("frame `{}` has no ground truth", self.frame_id)))
            })
            .collect()
    }
}

/// Color and depth SLIC followed by map combination.
pub fn oversegment(frame: &RgbdFrame, slic: &SlicConfig) -> Result<SuperpixelMap> {
    let rgb = slic_rgb(frame, slic)?;
    let depth = slic_depth(frame, slic)?;
    combine_maps(&rgb, &depth, slic.min_patch_area)
}

/// Over-segment the frame and build its (labeled, when possible) patch graph.
pub fn preprocess(
    frame: &RgbdFrame,
    config: &PipelineConfig,
    sidecar: Option<&Sidecar>,
) -> Result<(SuperpixelMap, PatchGraph)> {
    let prepared = prepare(frame, config, sidecar)?;
    Ok((prepared.map, prepared.graph))
}

/// [`preprocess`] keeping everything needed downstream.
pub fn prepare(frame: &RgbdFrame, config: &PipelineConfig, sidecar: Option<&Sidecar>) -> Result<PreparedFrame> {
    config.validate()?;
    if config.features.implicit && sidecar.is_none() {
        return Err(Error::Sidecar(format!(
            "frame `{}`: implicit features requested but no sidecar given",
            frame.frame_id
        )));
    }
    PreparedFrame::from_map(frame, oversegment(frame, &config.slic)?, sidecar)
}

/// Union-find over `patch_count` vertices. Component ids start at 1 and are
/// ordered by the smallest patch id they contain.
pub fn connected_components(patch_count: usize, edges: &[(u32, u32)]) -> Result<Vec<u32>> {
    let mut parent: Vec<usize> = (0..patch_count).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(a, b) in edges {
        let (a, b) = (a as usize, b as usize);
        if a >= patch_count || b >= patch_count {
            return Err(Error::Dimension(format!(
                "edge ({a}, {b}) out of range for {patch_count} patches"
            )));
        }
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut id_of_root = vec![0u32; patch_count];
    let mut next = 0;
    Ok((0..patch_count)
        .map(|p| {
            let r = find(&mut parent, p);
            if id_of_root[r] == 0 {
                next += 1;
                id_of_root[r] = next;
            }
            id_of_root[r]
        })
        .collect())
}

/// Predicted instances of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct InstancePrediction {
    pub width: usize,
    pub height: usize,
    /// Per-pixel segment id; 0 only for suppressed background.
    pub instance_map: Vec<u32>,
    /// Patch ids of segment `i + 1`.
    pub segments: Vec<Vec<u32>>,
    /// Patches assigned to the suppressed plane.
    pub background: Vec<u32>,
    /// Merge probability of each graph edge.
    pub edge_probs: Vec<f32>,
    pub threshold: f32,
}

impl InstancePrediction {
    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }
}

/// Merge probabilities of every edge (pairs fed as `(a, b)` with `a < b`).
pub fn score_edges(model: &MlpModel, graph: &PatchGraph, features: FeatureSet) -> Result<Vec<f32>> {
    let dim = features.pair_dim(graph.implicit_dim());
    if features.implicit && graph.implicit_dim() == 0 {
        return Err(Error::Sidecar("implicit features requested but the graph has none".into()));
    }
    if model.input_dim() != dim {
        return Err(Error::Config(format!(
            "checkpoint expects {} inputs, feature set `{features}` gives {dim}",
            model.input_dim()
        )));
    }
    const CHUNK: usize = 4096;
    let mut probs = Vec::with_capacity(graph.edges.len());
    let mut x = Vec::with_capacity(CHUNK * dim);
    for chunk in graph.edges.chunks(CHUNK) {
        x.clear();
        for e in chunk {
            graph.pair_features(e.a, e.b, features, &mut x);
        }
        probs.extend(model.predict(&x, chunk.len())?);
    }
    Ok(probs)
}

/// Segment a prepared frame given per-edge merge probabilities.
pub fn segment_with_probabilities(
    prepared: &PreparedFrame,
    edge_probs: Vec<f32>,
    config: &PipelineConfig,
) -> Result<InstancePrediction> {
    let graph = &prepared.graph;
    if edge_probs.len() != graph.edges.len() {
        return Err(Error::Dimension(format!(
            "{} probabilities for {} edges",
            edge_probs.len(),
            graph.edges.len()
        )));
    }
    let kept: Vec<(u32, u32)> = graph
        .edges
        .iter()
        .zip(&edge_probs)
        .filter(|(_, &p)| p >= config.threshold)
        .map(|(e, _)| (e.a, e.b))
        .collect();
    let mut component = connected_components(graph.patch_count(), &kept)?;
    let mut background = Vec::new();

    if config.suppress_plane {
        let n_seg = component.iter().copied().max().unwrap_or(0) as usize;
        let seg_pixels: Vec<u32> = prepared.map.labels().iter().map(|&l| component[l as usize]).collect();
        let drop = suppress_plane(
            &seg_pixels,
            n_seg,
            &prepared.depth,
            &prepared.valid,
            prepared.width(),
            config.plane_tolerance,
        );
        if drop.iter().any(|&d| d) {
            let mut remap = vec![0u32; n_seg + 1];
            let mut next = 0;
            for s in 1..=n_seg {
                if !drop[s - 1] {
                    next += 1;
                    remap[s] = next;
                }
            }
            for (p, c) in component.iter_mut().enumerate() {
                *c = remap[*c as usize];
                if *c == 0 {
                    background.push(p as u32);
                }
            }
        }
    }

    let n_seg = component.iter().copied().max().unwrap_or(0) as usize;
    let mut segments = vec![Vec::new(); n_seg];
    for (p, &c) in component.iter().enumerate() {
        if c > 0 {
            segments[c as usize - 1].push(p as u32);
        }
    }
    let instance_map = prepared.map.labels().iter().map(|&l| component[l as usize]).collect();
    Ok(InstancePrediction {
        width: prepared.width(),
        height: prepared.height(),
        instance_map,
        segments,
        background,
        edge_probs,
        threshold: config.threshold,
    })
}

/// Score every edge with `model` and segment the frame.
pub fn predict_instances(
    prepared: &PreparedFrame,
    model: &MlpModel,
    config: &PipelineConfig,
) -> Result<InstancePrediction> {
    let probs = score_edges(model, &prepared.graph, config.features)?;
    segment_with_probabilities(prepared, probs, config)
}

/// Full per-frame pipeline: preprocess, score, threshold, components, paint.
pub fn infer(
    frame: &RgbdFrame,
    model: &MlpModel,
    config: &PipelineConfig,
    sidecar: Option<&Sidecar>,
) -> Result<InstancePrediction> {
    let prepared = prepare(frame, config, sidecar)?;
    predict_instances(&prepared, model, config)
}

/// Lowercase hex SHA-256 digest.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionMeta {
    pub frame_id: String,
    pub threshold: f32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_sha256: Option<String>,
    /// Patch count of each segment, in segment-id order.
    pub segment_patch_counts: Vec<usize>,
    pub background_patches: usize,
}

pub fn save_prediction(
    pred: &InstancePrediction,
    dir: &Path,
    frame_id: &str,
    checkpoint_sha256: Option<String>,
) -> Result<()> {
    let ids = pred
        .instance_map
        .iter()
        .map(|&id| u16::try_from(id).map_err(|_| Error::InstanceIdOverflow(id as u64)))
        .collect::<Result<Vec<u16>>>()?;
    write_gray16(&dir.join(format!("{frame_id}_pred.png")), pred.width, pred.height, ids)?;
    let meta = PredictionMeta {
        frame_id: frame_id.to_string(),
        threshold: pred.threshold,
        checkpoint_sha256,
        segment_patch_counts: pred.segments.iter().map(Vec::len).collect(),
        background_patches: pred.background.len(),
    };
    write_json(&dir.join(format!("{frame_id}_pred.json")), &meta)
}

/// Read back a `<id>_pred.png` instance map as `(width, height, ids)`.
pub fn load_prediction_map(dir: &Path, frame_id: &str) -> Result<(usize, usize, Vec<u32>)> {
    let (w, h, ids) = read_gray16(frame_id, &dir.join(format!("{frame_id}_pred.png")))?;
    Ok((w, h, ids.into_iter().map(u32::from).collect()))
}
