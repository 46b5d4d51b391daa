//! Superpixel over-segmentation of the color and depth channels and the
//! combination of both partitions into one refined patch map.

mod combine;
pub mod lab;
pub mod regions;
mod slic;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagery::{read_gray16, read_json, write_gray16, write_json};

pub use combine::{combine_key, combine_maps, intersect_maps, shift_width, Intersection};
pub use slic::{slic, slic_depth, slic_rgb};

/// Patch-count presets exposed on the command line.
pub const PATCH_PRESETS: [usize; 4] = [32, 64, 128, 256];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Slic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlicConfig {
    pub algorithm: Algorithm,
    /// Target number of patches K per modality.
    pub target_patch_count: usize,
    pub compactness: f64,
    pub iterations: usize,
    pub min_patch_area: usize,
    /// Echoed into outputs; grid seeding itself draws no randomness.
    pub seed: u64,
    /// Multiplier applied to normalized depth before clustering. At the
    /// default 10 m normalization, 1000 makes one feature unit one centimeter.
    pub depth_scale: f64,
}

impl Default for SlicConfig {
    fn default() -> Self {
        SlicConfig {
            algorithm: Algorithm::Slic,
            target_patch_count: 128,
            compactness: 10.0,
            iterations: 10,
            min_patch_area: 16,
            seed: 0,
            depth_scale: 1000.0,
        }
    }
}

impl SlicConfig {
    pub fn with_patches(target_patch_count: usize) -> Self {
        SlicConfig {
            target_patch_count,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_patch_count == 0 {
            return Err(Error::Config("target_patch_count must be >= 1".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if self.min_patch_area == 0 {
            return Err(Error::Config("min_patch_area must be >= 1".into()));
        }
        if !(self.compactness.is_finite() && self.compactness >= 0.0) {
            return Err(Error::Config("compactness must be finite and >= 0".into()));
        }
        if !(self.depth_scale.is_finite() && self.depth_scale > 0.0) {
            return Err(Error::Config("depth_scale must be finite and > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_row: usize,
    pub min_col: usize,
    pub max_row: usize,
    pub max_col: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchMeta {
    pub area: usize,
    /// Mean pixel position as `(row, col)`.
    pub centroid: (f64, f64),
    pub bbox: BoundingBox,
}

/// A partition of the image into contiguous, 4-connected patches `0..N`.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperpixelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    patches: Vec<PatchMeta>,
    /// Id shift used when this map was produced by combining two maps.
    pub shift_width: Option<u64>,
}

impl SuperpixelMap {
    /// Build a map from labels that are already contiguous and connected.
    pub fn from_labels(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if width * height == 0 || labels.len() != width * height {
            return Err(Error::Dimension(format!(
                "label buffer of {} for {width}x{height}",
                labels.len()
            )));
        }
        let count = labels.iter().copied().max().unwrap() as usize + 1;
        let map = Self::with_meta(width, height, labels, count);
        map.check_partition()?;
        Ok(map)
    }

    /// Build a map from arbitrary integer keys: each 4-connected run of
    /// equal keys becomes one patch.
    pub fn from_keys<K: Copy + Eq>(width: usize, height: usize, keys: &[K]) -> Result<Self> {
        if width * height == 0 || keys.len() != width * height {
            return Err(Error::Dimension(format!(
                "key buffer of {} for {width}x{height}",
                keys.len()
            )));
        }
        let (labels, count) = regions::split_connected(width, height, keys);
        Ok(Self::with_meta(width, height, labels, count))
    }

    pub(crate) fn with_meta(width: usize, height: usize, labels: Vec<u32>, count: usize) -> Self {
        let mut acc = vec![(0usize, 0f64, 0f64); count];
        let mut bbox = vec![
            BoundingBox {
                min_row: usize::MAX,
                min_col: usize::MAX,
                max_row: 0,
                max_col: 0,
            };
            count
        ];
        for (p, &l) in labels.iter().enumerate() {
            let (row, col) = (p / width, p % width);
            let a = &mut acc[l as usize];
            a.0 += 1;
            a.1 += row as f64;
            a.2 += col as f64;
            let b = &mut bbox[l as usize];
            b.min_row = b.min_row.min(row);
            b.min_col = b.min_col.min(col);
            b.max_row = b.max_row.max(row);
            b.max_col = b.max_col.max(col);
        }
        let patches = acc
            .into_iter()
            .zip(bbox)
            .map(|((area, r, c), bbox)| PatchMeta {
                area,
                centroid: if area > 0 {
                    (r / area as f64, c / area as f64)
                } else {
                    (0.0, 0.0)
                },
                bbox,
            })
            .collect();
        SuperpixelMap {
            width,
            height,
            labels,
            patches,
            shift_width: None,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label_at(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }

    pub fn patch_count(&self) -> usize {
        self.patches.len()
    }

    pub fn patches(&self) -> &[PatchMeta] {
        &self.patches
    }

    /// Pixel indices of every patch, in raster order.
    pub fn pixels_by_patch(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self.patches.iter().map(|p| Vec::with_capacity(p.area)).collect();
        for (p, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(p);
        }
        out
    }

    /// Check ids are contiguous, every patch is non-empty and 4-connected.
    pub fn check_partition(&self) -> Result<()> {
        let n = self.patch_count();
        if let Some(p) = self.patches.iter().position(|m| m.area == 0) {
            return Err(Error::Dimension(format!("patch id {p} of {n} is empty")));
        }
        let (_, components) = regions::split_connected(self.width, self.height, &self.labels);
        if components != n {
            return Err(Error::Dimension(format!(
                "{n} patch ids but {components} connected components"
            )));
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path, frame_id: &str, config: &SlicConfig) -> Result<()> {
        if self.patch_count() > u16::MAX as usize + 1 {
            return Err(Error::Dimension(format!(
                "{} patches do not fit a 16-bit map",
                self.patch_count()
            )));
        }
        write_gray16(
            &dir.join(format!("{frame_id}_spx.png")),
            self.width,
            self.height,
            self.labels.iter().map(|&l| l as u16).collect(),
        )?;
        let meta = SpxMeta {
            width: self.width,
            height: self.height,
            patch_count: self.patch_count(),
            shift_width: self.shift_width,
            config: config.clone(),
        };
        write_json(&dir.join(format!("{frame_id}_spx.json")), &meta)
    }

    pub fn load(dir: &Path, frame_id: &str) -> Result<(Self, SlicConfig)> {
        let meta: SpxMeta = read_json(&dir.join(format!("{frame_id}_spx.json")))?;
        let (w, h, ids) = read_gray16(frame_id, &dir.join(format!("{frame_id}_spx.png")))?;
        let mut map = Self::from_labels(w, h, ids.into_iter().map(u32::from).collect())?;
        if map.patch_count() != meta.patch_count {
            return Err(Error::Dimension(format!(
                "{frame_id}_spx.json declares {} patches, map has {}",
                meta.patch_count,
                map.patch_count()
            )));
        }
        map.shift_width = meta.shift_width;
        Ok((map, meta.config))
    }
}

/// Contents of `<id>_spx.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpxMeta {
    pub width: usize,
    pub height: usize,
    pub patch_count: usize,
    pub shift_width: Option<u64>,
    pub config: SlicConfig,
}
