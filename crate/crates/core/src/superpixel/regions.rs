//! Label-map surgery shared by SLIC and map combination: splitting labels
//! into 4-connected components and absorbing undersized regions.

use std::collections::{BTreeSet, VecDeque};

/// Relabel so that every 4-connected run of equal keys gets its own id.
/// Ids are contiguous and assigned in raster order of first appearance.
pub fn split_connected<K: Copy + Eq>(width: usize, height: usize, keys: &[K]) -> (Vec<u32>, usize) {
    const UNSET: u32 = u32::MAX;
    let mut out = vec![UNSET; keys.len()];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..keys.len() {
        if out[start] != UNSET {
            continue;
        }
        let key = keys[start];
        out[start] = next;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            let (x, y) = (p % width, p / width);
            let mut visit = |q: usize| {
                if out[q] == UNSET && keys[q] == key {
                    out[q] = next;
                    queue.push_back(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < width {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - width);
            }
            if y + 1 < height {
                visit(p + width);
            }
        }
        next += 1;
    }
    (out, next as usize)
}

/// Renumber arbitrary ids to 0..N in raster order of first appearance.
pub fn relabel_raster(labels: &[u32]) -> (Vec<u32>, usize) {
    let max = labels.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut map = vec![u32::MAX; max];
    let mut next = 0u32;
    let out = labels
        .iter()
        .map(|&l| {
            let slot = &mut map[l as usize];
            if *slot == u32::MAX {
                *slot = next;
                next += 1;
            }
            *slot
        })
        .collect();
    (out, next as usize)
}

/// Sorted unique 4-adjacent pairs `(a, b)` with `a < b`.
pub fn adjacent_pairs(width: usize, height: usize, labels: &[u32]) -> Vec<(u32, u32)> {
    let mut pairs = Vec::new();
    for y in 0..height {
        for x in 0..width {
            let p = y * width + x;
            let a = labels[p];
            if x + 1 < width && labels[p + 1] != a {
                pairs.push((a.min(labels[p + 1]), a.max(labels[p + 1])));
            }
            if y + 1 < height && labels[p + width] != a {
                pairs.push((a.min(labels[p + width]), a.max(labels[p + width])));
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

/// Merge every region whose area is below its threshold into its largest
/// 4-adjacent neighbor (ties toward the smaller id), smallest regions first.
///
/// `min_area[r]` is the threshold for region `r`; a merged region keeps the
/// threshold of the region that absorbed it. Regions without neighbors are
/// left alone. Returns the new contiguous labels, their count and the number
/// of absorbed regions.
pub fn absorb_small(
    width: usize,
    height: usize,
    labels: &[u32],
    count: usize,
    min_area: &[usize],
) -> (Vec<u32>, usize, usize) {
    debug_assert_eq!(min_area.len(), count);
    let mut area = vec![0usize; count];
    for &l in labels {
        area[l as usize] += 1;
    }
    if !(0..count).any(|r| area[r] < min_area[r]) {
        return (labels.to_vec(), count, 0);
    }

    let mut neighbors = vec![BTreeSet::new(); count];
    for (a, b) in adjacent_pairs(width, height, labels) {
        neighbors[a as usize].insert(b);
        neighbors[b as usize].insert(a);
    }

    let threshold = min_area;
    let mut parent: Vec<u32> = (0..count as u32).collect();
    let mut queue: BTreeSet<(usize, u32)> = (0..count)
        .filter(|&r| area[r] < threshold[r])
        .map(|r| (area[r], r as u32))
        .collect();
    let mut absorbed = 0;

    while let Some((_, small)) = queue.pop_first() {
        let s = small as usize;
        let Some(&target) = neighbors[s]
            .iter()
            .max_by(|&&a, &&b| area[a as usize].cmp(&area[b as usize]).then(b.cmp(&a)))
        else {
            continue;
        };
        let t = target as usize;
        let was_queued = area[t] < threshold[t];
        if was_queued {
            queue.remove(&(area[t], target));
        }

        parent[s] = target;
        area[t] += area[s];
        area[s] = 0;
        let moved = std::mem::take(&mut neighbors[s]);
        for n in moved {
            let nu = n as usize;
            neighbors[nu].remove(&small);
            if n != target {
                neighbors[nu].insert(target);
                neighbors[t].insert(n);
            }
        }
        neighbors[t].remove(&small);
        absorbed += 1;

        if area[t] < threshold[t] {
            queue.insert((area[t], target));
        }
    }

    let root = |mut r: u32| {
        while parent[r as usize] != r {
            r = parent[r as usize];
        }
        r
    };
    let merged: Vec<u32> = labels.iter().map(|&l| root(l)).collect();
    let (out, n) = relabel_raster(&merged);
    (out, n, absorbed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_separates_disconnected_runs() {
        // 1 1 0
        // 0 0 0
        // 1 0 1
        let keys = [1, 1, 0, 0, 0, 0, 1, 0, 1];
        let (labels, n) = split_connected(3, 3, &keys);
        assert_eq!(n, 4);
        assert_eq!(labels, vec![0, 0, 1, 1, 1, 1, 2, 1, 3]);
    }

    #[test]
    fn small_region_joins_largest_neighbor() {
        // 0 0 0 1
        // 0 0 2 1
        // 0 0 1 1
        let labels = [0, 0, 0, 1, 0, 0, 2, 1, 0, 0, 1, 1];
        let (out, n, absorbed) = absorb_small(4, 3, &labels, 3, &[2, 2, 2]);
        assert_eq!(absorbed, 1);
        assert_eq!(n, 2);
        // region 2 touches 0 (area 7) and 1 (area 4): goes to 0.
        assert_eq!(out[6], out[0]);
    }

    #[test]
    fn chain_of_small_regions_collapses() {
        let labels = [0, 1, 2, 3];
        let (out, n, absorbed) = absorb_small(4, 1, &labels, 4, &[3; 4]);
        assert_eq!(n, 1);
        assert_eq!(absorbed, 3);
        assert!(out.iter().all(|&l| l == 0));
    }
}
