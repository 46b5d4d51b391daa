//! Object-level evaluation: Hungarian-matched overlap and boundary
//! precision / recall / F, and seen / unseen aggregation.
//!
//! Id 0 is background in both maps and never counts as an object.

mod hungarian;
mod report;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use hungarian::max_weight_assignment;
pub use report::{
    aggregate, evaluate_image, harmonic_mean, Aggregation, ClassSplit, ImageEval, ImageReport,
    MetricPair, ObjectCounts, SegEvalReport, Split,
};

/// Precision, recall and F-score in percent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub p: f64,
    pub r: f64,
    pub f: f64,
}

impl Prf {
    /// `P = p_num / p_den`, `R = r_num / r_den` (0 for empty denominators).
    pub fn from_sums(p_num: f64, p_den: f64, r_num: f64, r_den: f64) -> Self {
        let ratio = |n: f64, d: f64| if d > 0.0 { 100.0 * n / d } else { 0.0 };
        Self::from_pr(ratio(p_num, p_den), ratio(r_num, r_den))
    }

    pub fn from_pr(p: f64, r: f64) -> Self {
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        Prf { p, r, f }
    }
}

/// Pairwise F-scores between every gt object (rows) and predicted object
/// (columns), with the pixel counts they derive from.
#[derive(Clone, Debug, PartialEq)]
pub struct FMatrix {
    pub gt_ids: Vec<u32>,
    pub pred_ids: Vec<u32>,
    pub gt_area: Vec<usize>,
    pub pred_area: Vec<usize>,
    /// `|g_j ∩ s_i|`, row-major `G × S`.
    pub intersection: Vec<usize>,
    /// `2|g_j ∩ s_i| / (|g_j| + |s_i|)`, row-major `G × S`.
    pub f: Vec<f64>,
}

impl FMatrix {
    pub fn get(&self, gt: usize, pred: usize) -> f64 {
        self.f[gt * self.pred_ids.len() + pred]
    }
}

fn object_index(map: &[u32]) -> (Vec<u32>, BTreeMap<u32, usize>) {
    let mut ids: Vec<u32> = map.iter().copied().filter(|&id| id != 0).collect();
    ids.sort_unstable();
    ids.dedup();
    let index = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    (ids, index)
}

pub fn pairwise_f_matrix(pred: &[u32], gt: &[u32]) -> Result<FMatrix> {
    if pred.len() != gt.len() {
        return Err(Error::Dimension(format!(
            "prediction has {} pixels, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    let (gt_ids, gt_index) = object_index(gt);
    let (pred_ids, pred_index) = object_index(pred);
    let (g, s) = (gt_ids.len(), pred_ids.len());
    let mut gt_area = vec![0; g];
    let mut pred_area = vec![0; s];
    let mut intersection = vec![0; g * s];
    for (&pi, &gi) in pred.iter().zip(gt) {
        let pj = (pi != 0).then(|| pred_index[&pi]);
        let gj = (gi != 0).then(|| gt_index[&gi]);
        if let Some(pj) = pj {
            pred_area[pj] += 1;
        }
        if let Some(gj) = gj {
            gt_area[gj] += 1;
        }
        if let (Some(pj), Some(gj)) = (pj, gj) {
            intersection[gj * s + pj] += 1;
        }
    }
    let f = (0..g * s)
        .map(|k| {
            let (j, i) = (k / s, k % s);
            2.0 * intersection[k] as f64 / (gt_area[j] + pred_area[i]) as f64
        })
        .collect();
    Ok(FMatrix {
        gt_ids,
        pred_ids,
        gt_area,
        pred_area,
        intersection,
        f,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Match {
    pub gt: u32,
    pub pred: u32,
    pub f: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MatchResult {
    pub matches: Vec<Match>,
    pub unmatched_gt: Vec<u32>,
    pub unmatched_pred: Vec<u32>,
}

impl MatchResult {
    pub fn pred_to_gt(&self) -> BTreeMap<u32, u32> {
        self.matches.iter().map(|m| (m.pred, m.gt)).collect()
    }

    pub fn total_f(&self) -> f64 {
        self.matches.iter().map(|m| m.f).sum()
    }
}

/// One-to-one assignment maximizing the total pairwise F. Pairs with F = 0
/// are left unmatched.
pub fn hungarian_match(fm: &FMatrix) -> MatchResult {
    let (g, s) = (fm.gt_ids.len(), fm.pred_ids.len());
    let assignment = max_weight_assignment(&fm.f, g, s);
    let mut out = MatchResult::default();
    let mut pred_used = vec![false; s];
    for (j, col) in assignment.into_iter().enumerate() {
        match col.filter(|&i| fm.get(j, i) > 0.0) {
            Some(i) => {
                pred_used[i] = true;
                out.matches.push(Match {
                    gt: fm.gt_ids[j],
                    pred: fm.pred_ids[i],
                    f: fm.get(j, i),
                });
            }
            None => out.unmatched_gt.push(fm.gt_ids[j]),
        }
    }
    out.unmatched_pred = (0..s).filter(|&i| !pred_used[i]).map(|i| fm.pred_ids[i]).collect();
    out
}

/// Overlap P/R/F: matched intersections over all predicted (P) and all
/// ground-truth (R) object pixels.
pub fn overlap_prf(pred: &[u32], gt: &[u32], matching: &MatchResult) -> Prf {
    let pairs = matching.pred_to_gt();
    let (mut inter, mut pred_px, mut gt_px) = (0usize, 0usize, 0usize);
    for (&s, &g) in pred.iter().zip(gt) {
        pred_px += (s != 0) as usize;
        gt_px += (g != 0) as usize;
        if s != 0 && g != 0 && pairs.get(&s) == Some(&g) {
            inter += 1;
        }
    }
    Prf::from_sums(inter as f64, pred_px as f64, inter as f64, gt_px as f64)
}

/// Dilation radius for an image `height` rows tall: 2 px at 480 rows,
/// scaled proportionally and never below 1.
pub fn default_dilation_radius(height: usize) -> usize {
    ((2.0 * height as f64 / 480.0).round() as usize).max(1)
}

/// Per pixel: whether it lies on the boundary of its own object, i.e. has a
/// 4-neighbor inside the image carrying a different id. Background is never
/// a boundary.
pub fn boundary_mask(labels: &[u32], width: usize, height: usize) -> Vec<bool> {
    (0..labels.len())
        .map(|p| {
            let l = labels[p];
            if l == 0 {
                return false;
            }
            let (x, y) = (p % width, p / width);
            (x > 0 && labels[p - 1] != l)
                || (x + 1 < width && labels[p + 1] != l)
                || (y > 0 && labels[p - width] != l)
                || (y + 1 < height && labels[p + width] != l)
        })
        .collect()
}

pub(crate) fn disk_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Whether some pixel within the disk around `p` is a boundary pixel of
/// object `id` in `labels`.
pub(crate) fn near_boundary(
    p: usize,
    id: u32,
    labels: &[u32],
    boundary: &[bool],
    width: usize,
    height: usize,
    disk: &[(isize, isize)],
) -> bool {
    let (x, y) = ((p % width) as isize, (p / width) as isize);
    disk.iter().any(|&(dx, dy)| {
        let (qx, qy) = (x + dx, y + dy);
        if qx < 0 || qy < 0 || qx >= width as isize || qy >= height as isize {
            return false;
        }
        let q = qy as usize * width + qx as usize;
        boundary[q] && labels[q] == id
    })
}

/// Boundary P/R/F: a predicted boundary pixel counts toward P when it lies
/// within `radius` of its matched gt object's boundary, and symmetrically
/// for R. Denominators cover the boundaries of all objects.
pub fn boundary_prf(
    pred: &[u32],
    gt: &[u32],
    width: usize,
    height: usize,
    matching: &MatchResult,
    radius: usize,
) -> Prf {
    let bp = boundary_mask(pred, width, height);
    let bg = boundary_mask(gt, width, height);
    let disk = disk_offsets(radius);
    let pred_to_gt = matching.pred_to_gt();
    let gt_to_pred: BTreeMap<u32, u32> = matching.matches.iter().map(|m| (m.gt, m.pred)).collect();
    let (mut p_num, mut p_den, mut r_num, mut r_den) = (0usize, 0usize, 0usize, 0usize);
    for p in 0..pred.len() {
        if bp[p] {
            p_den += 1;
            if let Some(&g) = pred_to_gt.get(&pred[p]) {
                p_num += near_boundary(p, g, gt, &bg, width, height, &disk) as usize;
            }
        }
        if bg[p] {
            r_den += 1;
            if let Some(&s) = gt_to_pred.get(&gt[p]) {
                r_num += near_boundary(p, s, pred, &bp, width, height, &disk) as usize;
            }
        }
    }
    Prf::from_sums(p_num as f64, p_den as f64, r_num as f64, r_den as f64)
}
