use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::normals::compute_normals;
use super::sidecar::Sidecar;
use crate::error::{Error, Result};
use crate::imagery::RgbdFrame;
use crate::superpixel::SuperpixelMap;

/// Explicit components per patch: R, G, B, X, Y, Z, nx, ny, nz.
pub const EXPLICIT_DIM: usize = 9;

#[derive(Clone, Debug, PartialEq)]
pub struct PatchFeatures {
    pub rgb_mean: [f32; 3],
    /// Centroid as `((col + 0.5) / width, (row + 0.5) / height)`.
    pub centroid_xy: [f32; 2],
    pub z: f32,
    pub normal: [f32; 3],
    pub implicit: Option<Vec<f32>>,
    /// No valid depth reading inside the patch; `z` and `normal` are defaults.
    pub depth_missing: bool,
}

impl PatchFeatures {
    pub fn explicit(&self) -> [f32; EXPLICIT_DIM] {
        let [r, g, b] = self.rgb_mean;
        let [x, y] = self.centroid_xy;
        let [nx, ny, nz] = self.normal;
        [r, g, b, x, y, self.z, nx, ny, nz]
    }

    /// Append the components selected by `set` to `out`.
    pub fn push_selected(&self, set: FeatureSet, out: &mut Vec<f32>) {
        if set.rgb {
            out.extend_from_slice(&self.rgb_mean);
        }
        if set.xyz {
            out.extend_from_slice(&self.centroid_xy);
            out.push(self.z);
        }
        if set.normals {
            out.extend_from_slice(&self.normal);
        }
        if set.implicit {
            out.extend_from_slice(self.implicit.as_deref().unwrap_or(&[]));
        }
    }
}

/// Which feature groups feed the merger.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureSet {
    pub rgb: bool,
    pub xyz: bool,
    pub normals: bool,
    pub implicit: bool,
}

impl FeatureSet {
    pub const EXPLICIT: FeatureSet = FeatureSet {
        rgb: true,
        xyz: true,
        normals: true,
        implicit: false,
    };

    /// Per-patch width given the implicit dimension `m`.
    pub fn patch_dim(&self, m: usize) -> usize {
        3 * (self.rgb as usize + self.xyz as usize + self.normals as usize)
            + if self.implicit { m } else { 0 }
    }

    /// Edge-sample width: two concatenated patches.
    pub fn pair_dim(&self, m: usize) -> usize {
        2 * self.patch_dim(m)
    }

    pub fn is_empty(&self) -> bool {
        !(self.rgb || self.xyz || self.normals || self.implicit)
    }
}

impl Default for FeatureSet {
    fn default() -> Self {
        FeatureSet::EXPLICIT
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [
            (self.rgb, "rgb"),
            (self.xyz, "xyz"),
            (self.normals, "normals"),
            (self.implicit, "implicit"),
        ]
        .into_iter()
        .filter_map(|(on, name)| on.then_some(name))
        .collect();
        f.write_str(&names.join(","))
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    /// Comma-separated subset of `rgb`, `xyz`, `normals`, `implicit`.
    fn from_str(s: &str) -> Result<Self> {
        let mut set = FeatureSet {
            rgb: false,
            xyz: false,
            normals: false,
            implicit: false,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let flag = match part {
                "rgb" => &mut set.rgb,
                "xyz" => &mut set.xyz,
                "normals" => &mut set.normals,
                "implicit" => &mut set.implicit,
                other => return Err(Error::Config(format!("unknown feature group `{other}`"))),
            };
            *flag = true;
        }
        if set.is_empty() {
            return Err(Error::Config("feature set is empty".into()));
        }
        Ok(set)
    }
}

/// Per-patch descriptors: mean color, normalized centroid, and depth and
/// normal read at the valid patch pixel nearest to the centroid.
pub fn extract_features(
    frame: &RgbdFrame,
    map: &SuperpixelMap,
    sidecar: Option<&Sidecar>,
) -> Result<Vec<PatchFeatures>> {
    let (w, h) = (frame.width, frame.height);
    if (map.width(), map.height()) != (w, h) {
        return Err(Error::Dimension(format!(
            "superpixel map {}x{} vs frame {w}x{h}",
            map.width(),
            map.height()
        )));
    }
    if let Some(s) = sidecar {
        if s.patch_count() != map.patch_count() {
            return Err(Error::Sidecar(format!(
                "sidecar covers {} patches, map has {}",
                s.patch_count(),
                map.patch_count()
            )));
        }
    }
    let normals = compute_normals(&frame.depth, &frame.valid, w, h);
    let pixels = map.pixels_by_patch();

    Ok(map
        .patches()
        .iter()
        .zip(&pixels)
        .enumerate()
        .map(|(id, (meta, pix))| {
            let mut sum = [0f64; 3];
            for &p in pix {
                for (s, &c) in sum.iter_mut().zip(&frame.rgb[p]) {
                    *s += c as f64;
                }
            }
            let inv = 1.0 / pix.len() as f64;
            let (crow, ccol) = meta.centroid;
            let anchor = pix
                .iter()
                .copied()
                .filter(|&p| frame.valid[p])
                .min_by(|&a, &b| {
                    let d = |p: usize| {
                        let (r, c) = ((p / w) as f64, (p % w) as f64);
                        (r - crow).powi(2) + (c - ccol).powi(2)
                    };
                    d(a).total_cmp(&d(b))
                });
            let (z, normal) = match anchor {
                Some(p) => (frame.depth[p], normals[p]),
                None => (0.0, [0.0, 0.0, 1.0]),
            };
            PatchFeatures {
                rgb_mean: sum.map(|s| (s * inv) as f32),
                centroid_xy: [
                    ((ccol + 0.5) / w as f64) as f32,
                    ((crow + 0.5) / h as f64) as f32,
                ],
                z,
                normal,
                implicit: sidecar.and_then(|s| s.row(id)).map(<[f32]>::to_vec),
                depth_missing: anchor.is_none(),
            }
        })
        .collect())
}
