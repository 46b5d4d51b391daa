use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    boundary_mask, disk_offsets, hungarian_match, near_boundary, pairwise_f_matrix, Prf,
};
use crate::error::{Error, Result};

/// `2·S·U / (S + U)`, 0 when both are 0.
pub fn harmonic_mean(seen: f64, unseen: f64) -> f64 {
    if seen + unseen > 0.0 {
        2.0 * seen * unseen / (seen + unseen)
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Seen,
    Unseen,
}

/// Seen / unseen class partition used for evaluation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassSplit {
    pub seen: BTreeSet<String>,
    pub unseen: BTreeSet<String>,
}

impl ClassSplit {
    pub fn new<S: Into<String>>(
        seen: impl IntoIterator<Item = S>,
        unseen: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let split = ClassSplit {
            seen: seen.into_iter().map(Into::into).collect(),
            unseen: unseen.into_iter().map(Into::into).collect(),
        };
        if let Some(c) = split.seen.intersection(&split.unseen).next() {
            return Err(Error::Split(format!("class `{c}` is both seen and unseen")));
        }
        Ok(split)
    }

    pub fn split_of(&self, class: &str) -> Result<Split> {
        if self.seen.contains(class) {
            Ok(Split::Seen)
        } else if self.unseen.contains(class) {
            Ok(Split::Unseen)
        } else {
            Err(Error::UnknownClass(class.to_string()))
        }
    }
}

/// Pixel sums behind overlap and boundary P/R for one subset of objects.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Sums {
    pub overlap_p: [f64; 2],
    pub overlap_r: [f64; 2],
    pub boundary_p: [f64; 2],
    pub boundary_r: [f64; 2],
}

impl Sums {
    fn add(&mut self, o: &Sums) {
        for (a, b) in [
            (&mut self.overlap_p, o.overlap_p),
            (&mut self.overlap_r, o.overlap_r),
            (&mut self.boundary_p, o.boundary_p),
            (&mut self.boundary_r, o.boundary_r),
        ] {
            a[0] += b[0];
            a[1] += b[1];
        }
    }

    pub fn metrics(&self) -> MetricPair {
        MetricPair {
            overlap: Prf::from_sums(self.overlap_p[0], self.overlap_p[1], self.overlap_r[0], self.overlap_r[1]),
            boundary: Prf::from_sums(
                self.boundary_p[0],
                self.boundary_p[1],
                self.boundary_r[0],
                self.boundary_r[1],
            ),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub overlap: Prf,
    pub boundary: Prf,
}

impl MetricPair {
    /// Metric-wise harmonic mean of seen and unseen scores.
    pub fn harmonic(seen: &MetricPair, unseen: &MetricPair) -> MetricPair {
        let hm = |a: &Prf, b: &Prf| Prf {
            p: harmonic_mean(a.p, b.p),
            r: harmonic_mean(a.r, b.r),
            f: harmonic_mean(a.f, b.f),
        };
        MetricPair {
            overlap: hm(&seen.overlap, &unseen.overlap),
            boundary: hm(&seen.boundary, &unseen.boundary),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectCounts {
    pub all: usize,
    pub seen: usize,
    pub unseen: usize,
}

/// Per-image sums, overall and per split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageEval {
    pub frame_id: String,
    pub all: Sums,
    pub seen: Sums,
    pub unseen: Sums,
    pub objects: ObjectCounts,
    pub has_split: bool,
}

/// Evaluate one predicted instance map against ground truth.
///
/// With a class split, every gt object contributes to its class's split; a
/// predicted object follows its matched gt object, else the gt object it
/// overlaps most (ties toward the smaller id), else both splits.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_image(
    frame_id: &str,
    pred: &[u32],
    gt: &[u32],
    width: usize,
    height: usize,
    classes: Option<&BTreeMap<u32, String>>,
    split: Option<&ClassSplit>,
    radius: usize,
) -> Result<ImageEval> {
    if pred.len() != width * height || gt.len() != width * height {
        return Err(Error::Dimension(format!(
            "frame `{frame_id}`: maps of {} and {} pixels for {width}x{height}",
            pred.len(),
            gt.len()
        )));
    }
    let fm = pairwise_f_matrix(pred, gt)?;
    let matching = hungarian_match(&fm);
    let (ng, ns) = (fm.gt_ids.len(), fm.pred_ids.len());
    let gt_pos: BTreeMap<u32, usize> = fm.gt_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let pred_pos: BTreeMap<u32, usize> = fm.pred_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut pred_match: Vec<Option<usize>> = vec![None; ns];
    let mut gt_match: Vec<Option<usize>> = vec![None; ng];
    for m in &matching.matches {
        let (j, i) = (gt_pos[&m.gt], pred_pos[&m.pred]);
        pred_match[i] = Some(j);
        gt_match[j] = Some(i);
    }

    // Per-object sums: [overlap num, overlap den, boundary num, boundary den].
    let mut gs = vec![[0f64; 4]; ng];
    let mut ps = vec![[0f64; 4]; ns];
    for j in 0..ng {
        gs[j][1] = fm.gt_area[j] as f64;
        if let Some(i) = gt_match[j] {
            gs[j][0] = fm.intersection[j * ns + i] as f64;
        }
    }
    for i in 0..ns {
        ps[i][1] = fm.pred_area[i] as f64;
        if let Some(j) = pred_match[i] {
            ps[i][0] = fm.intersection[j * ns + i] as f64;
        }
    }
    let bp = boundary_mask(pred, width, height);
    let bg = boundary_mask(gt, width, height);
    let disk = disk_offsets(radius);
    for p in 0..pred.len() {
        if bp[p] {
            let i = pred_pos[&pred[p]];
            ps[i][3] += 1.0;
            if let Some(j) = pred_match[i] {
                ps[i][2] += near_boundary(p, fm.gt_ids[j], gt, &bg, width, height, &disk) as u8 as f64;
            }
        }
        if bg[p] {
            let j = gt_pos[&gt[p]];
            gs[j][3] += 1.0;
            if let Some(i) = gt_match[j] {
                gs[j][2] += near_boundary(p, fm.pred_ids[i], pred, &bp, width, height, &disk) as u8 as f64;
            }
        }
    }

    let to_r = |s: &[f64; 4]| Sums {
        overlap_r: [s[0], s[1]],
        boundary_r: [s[2], s[3]],
        ..Default::default()
    };
    let to_p = |s: &[f64; 4]| Sums {
        overlap_p: [s[0], s[1]],
        boundary_p: [s[2], s[3]],
        ..Default::default()
    };

    let mut all = Sums::default();
    gs.iter().for_each(|s| all.add(&to_r(s)));
    ps.iter().for_each(|s| all.add(&to_p(s)));
    let mut out = ImageEval {
        frame_id: frame_id.to_string(),
        all,
        seen: Sums::default(),
        unseen: Sums::default(),
        objects: ObjectCounts {
            all: ng,
            ..Default::default()
        },
        has_split: split.is_some(),
    };
    let Some(split) = split else {
        return Ok(out);
    };
    let classes = classes.ok_or_else(|| {
        Error::InvalidFrame(format!("frame `{frame_id}` has no class map for split evaluation"))
    })?;
    let gt_split = fm
        .gt_ids
        .iter()
        .map(|id| {
            let class = classes
                .get(id)
                .ok_or_else(|| Error::InvalidFrame(format!("frame `{frame_id}`: instance {id} has no class")))?;
            split.split_of(class)
        })
        .collect::<Result<Vec<_>>>()?;
    let bucket = |out: &mut ImageEval, s: Split, sums: &Sums| match s {
        Split::Seen => out.seen.add(sums),
        Split::Unseen => out.unseen.add(sums),
    };
    for j in 0..ng {
        bucket(&mut out, gt_split[j], &to_r(&gs[j]));
        match gt_split[j] {
            Split::Seen => out.objects.seen += 1,
            Split::Unseen => out.objects.unseen += 1,
        }
    }
    for i in 0..ns {
        let owner = pred_match[i].or_else(|| {
            (0..ng)
                .filter(|&j| fm.intersection[j * ns + i] > 0)
                .max_by(|&a, &b| fm.intersection[a * ns + i].cmp(&fm.intersection[b * ns + i]).then(b.cmp(&a)))
        });
        let sums = to_p(&ps[i]);
        match owner {
            Some(j) => bucket(&mut out, gt_split[j], &sums),
            None => {
                out.seen.add(&sums);
                out.unseen.add(&sums);
            }
        }
    }
    Ok(out)
}

/// How image-level results are combined into headline numbers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Sum pixel counts over all objects of all images.
    #[default]
    Pooled,
    /// Average per-image scores over the images containing the subset.
    PerImage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageReport {
    pub frame_id: String,
    pub all: MetricPair,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seen: Option<MetricPair>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unseen: Option<MetricPair>,
    pub objects: ObjectCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegEvalReport {
    pub aggregation: Aggregation,
    pub images: usize,
    pub objects: ObjectCounts,
    pub all: MetricPair,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seen: Option<MetricPair>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unseen: Option<MetricPair>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hm: Option<MetricPair>,
    pub per_image: Vec<ImageReport>,
}

fn mean_pair(pairs: &[MetricPair]) -> MetricPair {
    if pairs.is_empty() {
        return MetricPair::default();
    }
    let n = pairs.len() as f64;
    let avg = |get: &dyn Fn(&MetricPair) -> Prf| {
        let (p, r, f) = pairs.iter().map(get).fold((0.0, 0.0, 0.0), |a, x| (a.0 + x.p, a.1 + x.r, a.2 + x.f));
        Prf { p: p / n, r: r / n, f: f / n }
    };
    MetricPair {
        overlap: avg(&|m| m.overlap),
        boundary: avg(&|m| m.boundary),
    }
}

/// Combine per-image results into a report. Seen / unseen / HM rows are
/// present when every image was evaluated with a class split.
pub fn aggregate(images: &[ImageEval], mode: Aggregation) -> SegEvalReport {
    let with_split = !images.is_empty() && images.iter().all(|e| e.has_split);
    let mut objects = ObjectCounts::default();
    for e in images {
        objects.all += e.objects.all;
        objects.seen += e.objects.seen;
        objects.unseen += e.objects.unseen;
    }
    let combine = |get: &dyn Fn(&ImageEval) -> (&Sums, usize)| match mode {
        Aggregation::Pooled => {
            let mut total = Sums::default();
            images.iter().for_each(|e| total.add(get(e).0));
            total.metrics()
        }
        Aggregation::PerImage => {
            let pairs: Vec<MetricPair> = images
                .iter()
                .filter(|e| get(e).1 > 0)
                .map(|e| get(e).0.metrics())
                .collect();
            mean_pair(&pairs)
        }
    };
    let all = combine(&|e| (&e.all, e.objects.all));
    let (seen, unseen, hm) = if with_split {
        let s = combine(&|e| (&e.seen, e.objects.seen));
        let u = combine(&|e| (&e.unseen, e.objects.unseen));
        (Some(s), Some(u), Some(MetricPair::harmonic(&s, &u)))
    } else {
        (None, None, None)
    };
    let per_image = images
        .iter()
        .map(|e| ImageReport {
            frame_id: e.frame_id.clone(),
            all: e.all.metrics(),
            seen: e.has_split.then(|| e.seen.metrics()),
            unseen: e.has_split.then(|| e.unseen.metrics()),
            objects: e.objects,
        })
        .collect();
    SegEvalReport {
        aggregation: mode,
        images: images.len(),
        objects,
        all,
        seen,
        unseen,
        hm,
        per_image,
    }
}

impl SegEvalReport {
    /// Aligned plain-text table: one row per subset, overlap then boundary.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8} {:>7} {:>7} {:>7} | {:>7} {:>7} {:>7}",
            "", "Overlap", "", "", "Boundary", "", ""
        );
        let _ = writeln!(
            out,
            "{:<8} {:>7} {:>7} {:>7} | {:>7} {:>7} {:>7}",
            "split", "P", "R", "F", "P", "R", "F"
        );
        let mut row = |name: &str, m: &MetricPair| {
            let _ = writeln!(
                out,
                "{:<8} {:>7.2} {:>7.2} {:>7.2} | {:>7.2} {:>7.2} {:>7.2}",
                name, m.overlap.p, m.overlap.r, m.overlap.f, m.boundary.p, m.boundary.r, m.boundary.f
            );
        };
        row("all", &self.all);
        for (name, m) in [("seen", &self.seen), ("unseen", &self.unseen), ("HM", &self.hm)] {
            if let Some(m) = m {
                row(name, m);
            }
        }
        let _ = writeln!(
            out,
            "{} images, {} objects ({} seen, {} unseen)",
            self.images, self.objects.all, self.objects.seen, self.objects.unseen
        );
        out
    }
}
