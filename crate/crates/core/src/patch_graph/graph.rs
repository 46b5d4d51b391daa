use std::collections::BTreeMap;

use super::features::{FeatureSet, PatchFeatures};
use crate::error::{Error, Result};
use crate::superpixel::{regions::adjacent_pairs, SuperpixelMap};

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    /// Smaller patch id.
    pub a: u32,
    /// Larger patch id.
    pub b: u32,
    /// `true` when both patches belong to the same ground-truth instance.
    pub gt: Option<bool>,
    pub prob: Option<f32>,
}

/// Patches as vertices, 4-adjacency as undirected edges.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchGraph {
    pub features: Vec<PatchFeatures>,
    pub edges: Vec<Edge>,
    /// Majority ground-truth instance of each patch, once labeled.
    pub gt_instance: Option<Vec<u32>>,
}

impl PatchGraph {
    pub fn patch_count(&self) -> usize {
        self.features.len()
    }

    /// Implicit feature width (0 without a sidecar).
    pub fn implicit_dim(&self) -> usize {
        self.features
            .first()
            .and_then(|f| f.implicit.as_ref())
            .map_or(0, Vec::len)
    }

    pub fn is_labeled(&self) -> bool {
        self.edges.iter().all(|e| e.gt.is_some())
    }

    /// Fraction of labeled edges that are positive; `None` without labels.
    pub fn positive_fraction(&self) -> Option<f64> {
        let labeled: Vec<bool> = self.edges.iter().filter_map(|e| e.gt).collect();
        (!labeled.is_empty())
            .then(|| labeled.iter().filter(|&&l| l).count() as f64 / labeled.len() as f64)
    }

    /// Concatenated features of `(first, second)` restricted to `set`.
    pub fn pair_features(&self, first: u32, second: u32, set: FeatureSet, out: &mut Vec<f32>) {
        self.features[first as usize].push_selected(set, out);
        self.features[second as usize].push_selected(set, out);
    }
}

pub fn build_graph(map: &SuperpixelMap, features: Vec<PatchFeatures>) -> Result<PatchGraph> {
    if features.len() != map.patch_count() {
        return Err(Error::Dimension(format!(
            "{} feature rows for {} patches",
            features.len(),
            map.patch_count()
        )));
    }
    if let Some(m) = features.first().map(|f| f.implicit.as_ref().map_or(0, Vec::len)) {
        if features.iter().any(|f| f.implicit.as_ref().map_or(0, Vec::len) != m) {
            return Err(Error::Sidecar("implicit feature width varies across patches".into()));
        }
    }
    let edges = adjacent_pairs(map.width(), map.height(), map.labels())
        .into_iter()
        .map(|(a, b)| Edge {
            a,
            b,
            gt: None,
            prob: None,
        })
        .collect();
    Ok(PatchGraph {
        features,
        edges,
        gt_instance: None,
    })
}

/// Majority instance id over each patch's pixels, ties toward the smaller id.
pub fn majority_instances(map: &SuperpixelMap, instance_gt: &[u32]) -> Result<Vec<u32>> {
    if instance_gt.len() != map.labels().len() {
        return Err(Error::Dimension(format!(
            "instance map of {} pixels vs superpixel map of {}",
            instance_gt.len(),
            map.labels().len()
        )));
    }
    let mut votes: Vec<BTreeMap<u32, usize>> = vec![BTreeMap::new(); map.patch_count()];
    for (&l, &id) in map.labels().iter().zip(instance_gt) {
        *votes[l as usize].entry(id).or_default() += 1;
    }
    Ok(votes
        .into_iter()
        .map(|v| {
            // BTreeMap iterates ids ascending; keep the first maximum.
            v.into_iter()
                .fold((0u32, 0usize), |best, (id, n)| if n > best.1 { (id, n) } else { best })
                .0
        })
        .collect())
}

/// Give each patch its majority instance and each edge a merge label:
/// positive iff both ends share an instance (background included).
pub fn label_edges_from_gt(
    mut graph: PatchGraph,
    map: &SuperpixelMap,
    instance_gt: &[u32],
) -> Result<PatchGraph> {
    let owner = majority_instances(map, instance_gt)?;
    for e in &mut graph.edges {
        e.gt = Some(owner[e.a as usize] == owner[e.b as usize]);
    }
    graph.gt_instance = Some(owner);
    Ok(graph)
}
