use super::{regions, SuperpixelMap};
use crate::error::{Error, Result};

/// Smallest power of ten (at least 1000) exceeding every depth patch id.
pub fn shift_width(depth_patch_count: usize) -> u64 {
    let mut shift = 1000u64;
    while depth_patch_count as u64 >= shift {
        shift *= 10;
    }
    shift
}

/// Hash key of a pixel from its color and depth patch ids.
pub fn combine_key(rgb_id: u32, depth_id: u32, shift: u64) -> u64 {
    rgb_id as u64 * shift + depth_id as u64
}

/// Intersection of two partitions before small-patch absorption.
#[derive(Clone, Debug)]
pub struct Intersection {
    pub map: SuperpixelMap,
    pub shift: u64,
}

impl Intersection {
    /// Absorb patches smaller than `min_patch_area` into their largest
    /// neighbor. Returns the final map and the number of absorbed patches.
    pub fn absorb(self, min_patch_area: usize) -> (SuperpixelMap, usize) {
        let (w, h) = (self.map.width(), self.map.height());
        let count = self.map.patch_count();
        let (labels, count, absorbed) =
            regions::absorb_small(w, h, self.map.labels(), count, &vec![min_patch_area; count]);
        let mut map = SuperpixelMap::with_meta(w, h, labels, count);
        map.shift_width = Some(self.shift);
        (map, absorbed)
    }
}

/// Every pixel gets the key `rgb_id * shift + depth_id`; each 4-connected run
/// of one key becomes a patch, so the result refines both inputs.
pub fn intersect_maps(rgb: &SuperpixelMap, depth: &SuperpixelMap) -> Result<Intersection> {
    if (rgb.width(), rgb.height()) != (depth.width(), depth.height()) {
        return Err(Error::Dimension(format!(
            "rgb map {}x{} vs depth map {}x{}",
            rgb.width(),
            rgb.height(),
            depth.width(),
            depth.height()
        )));
    }
    let shift = shift_width(depth.patch_count());
    if shift != 1000 {
        log::debug!("depth map has {} patches; id shift widened to {shift}", depth.patch_count());
    }
    let keys: Vec<u64> = rgb
        .labels()
        .iter()
        .zip(depth.labels())
        .map(|(&r, &d)| combine_key(r, d, shift))
        .collect();
    let mut map = SuperpixelMap::from_keys(rgb.width(), rgb.height(), &keys)?;
    map.shift_width = Some(shift);
    Ok(Intersection { map, shift })
}

/// Combine color and depth partitions into one refined, connected map with
/// no patch smaller than `min_patch_area` (unless it has no neighbor).
pub fn combine_maps(
    rgb: &SuperpixelMap,
    depth: &SuperpixelMap,
    min_patch_area: usize,
) -> Result<SuperpixelMap> {
    Ok(intersect_maps(rgb, depth)?.absorb(min_patch_area).0)
}
