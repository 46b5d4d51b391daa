//! Simple linear iterative clustering over an arbitrary number of channels.

use super::{lab::srgb_to_lab, regions, SlicConfig, SuperpixelMap};
use crate::error::{Error, Result};
use crate::imagery::RgbdFrame;

struct Center {
    x: f64,
    y: f64,
    feature: Vec<f64>,
}

/// Cluster `data` (row-major, `channels` interleaved values per pixel) into
/// roughly `config.target_patch_count` compact, connected patches.
pub fn slic(
    data: &[f32],
    width: usize,
    height: usize,
    channels: usize,
    config: &SlicConfig,
) -> Result<SuperpixelMap> {
    config.validate()?;
    let n = width * height;
    if n == 0 {
        return Err(Error::Dimension("empty image".into()));
    }
    if channels == 0 || data.len() != n * channels {
        return Err(Error::Dimension(format!(
            "{} values for {width}x{height}x{channels}",
            data.len()
        )));
    }
    let k = config.target_patch_count;
    if k > n {
        return Err(Error::Config(format!(
            "target patch count {k} exceeds pixel count {n}"
        )));
    }

    // Grid step used for the spatial normalization, and a seed grid whose
    // rows/cols follow the image aspect ratio so that nx * ny ~ K.
    let step = (n as f64 / k as f64).sqrt().floor().max(1.0);
    let ny = ((k as f64 * height as f64 / width as f64).sqrt().round() as usize).clamp(1, height);
    let nx = ((k as f64 / ny as f64).round() as usize).clamp(1, width);
    let (sx, sy) = (width as f64 / nx as f64, height as f64 / ny as f64);
    let window = sx.max(sy).ceil() as isize;
    let pixel = |p: usize| &data[p * channels..(p + 1) * channels];

    let mut seeds = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let x = ((i as f64 + 0.5) * sx) as usize;
            let y = ((j as f64 + 0.5) * sy) as usize;
            seeds.push((x.min(width - 1), y.min(height - 1)));
        }
    }
    if sx >= 3.0 && sy >= 3.0 {
        for seed in &mut seeds {
            *seed = lowest_gradient(data, width, height, channels, *seed);
        }
    }

    let mut centers: Vec<Center> = seeds
        .iter()
        .map(|&(x, y)| Center {
            x: x as f64,
            y: y as f64,
            feature: pixel(y * width + x).iter().map(|&v| v as f64).collect(),
        })
        .collect();

    let spatial_weight = config.compactness / step;
    let distance = |c: &Center, p: usize, x: usize, y: usize| {
        let f: f64 = c
            .feature
            .iter()
            .zip(pixel(p))
            .map(|(&a, &b)| (a - b as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        let s = ((c.x - x as f64).powi(2) + (c.y - y as f64).powi(2)).sqrt();
        f + spatial_weight * s
    };

    let mut labels = vec![u32::MAX; n];
    let mut dist = vec![f64::INFINITY; n];
    for iteration in 0..config.iterations {
        dist.fill(f64::INFINITY);
        for (ci, c) in centers.iter().enumerate() {
            let (cx, cy) = (c.x.round() as isize, c.y.round() as isize);
            let y0 = (cy - window).max(0) as usize;
            let y1 = ((cy + window) as usize).min(height - 1);
            let x0 = (cx - window).max(0) as usize;
            let x1 = ((cx + window) as usize).min(width - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let p = y * width + x;
                    let d = distance(c, p, x, y);
                    if d < dist[p] {
                        dist[p] = d;
                        labels[p] = ci as u32;
                    }
                }
            }
        }
        if iteration == 0 {
            // Pixels outside every window: nearest center overall.
            let uncovered: Vec<usize> = (0..n).filter(|&p| labels[p] == u32::MAX).collect();
            for p in uncovered {
                let (x, y) = (p % width, p / width);
                let best = (0..centers.len())
                    .min_by(|&a, &b| {
                        distance(&centers[a], p, x, y).total_cmp(&distance(&centers[b], p, x, y))
                    })
                    .unwrap();
                labels[p] = best as u32;
            }
        }

        let mut sums = vec![(0usize, 0f64, 0f64, vec![0f64; channels]); centers.len()];
        for (p, &l) in labels.iter().enumerate() {
            let s = &mut sums[l as usize];
            s.0 += 1;
            s.1 += (p % width) as f64;
            s.2 += (p / width) as f64;
            for (acc, &v) in s.3.iter_mut().zip(pixel(p)) {
                *acc += v as f64;
            }
        }
        for (c, (count, x, y, f)) in centers.iter_mut().zip(sums) {
            if count > 0 {
                let inv = 1.0 / count as f64;
                c.x = x * inv;
                c.y = y * inv;
                for (cf, v) in c.feature.iter_mut().zip(f) {
                    *cf = v * inv;
                }
            }
        }
    }

    Ok(enforce_connectivity(width, height, &labels, step, config.min_patch_area))
}

/// Split every cluster into its 4-connected components; the largest
/// component keeps the cluster, the others ("strays") become patches of their
/// own unless small, in which case they are absorbed. Patches below the
/// minimum area are absorbed into their largest neighbor.
fn enforce_connectivity(
    width: usize,
    height: usize,
    clusters: &[u32],
    step: f64,
    min_patch_area: usize,
) -> SuperpixelMap {
    let (components, count) = regions::split_connected(width, height, clusters);
    let mut origin = vec![0u32; count];
    let mut area = vec![0usize; count];
    for (&comp, &cluster) in components.iter().zip(clusters) {
        origin[comp as usize] = cluster;
        area[comp as usize] += 1;
    }
    let n_clusters = clusters.iter().copied().max().unwrap_or(0) as usize + 1;
    let mut primary = vec![u32::MAX; n_clusters];
    for comp in 0..count {
        let slot = &mut primary[origin[comp] as usize];
        if *slot == u32::MAX || area[comp] > area[*slot as usize] {
            *slot = comp as u32;
        }
    }

    let quarter = ((step * step) / 4.0).floor() as usize;
    let min_area = min_patch_area.min(quarter.max(1));
    let stray_area = min_area.max(quarter);
    let thresholds: Vec<usize> = (0..count)
        .map(|comp| {
            if primary[origin[comp] as usize] == comp as u32 {
                min_area
            } else {
                stray_area
            }
        })
        .collect();
    let (labels, count, _) = regions::absorb_small(width, height, &components, count, &thresholds);
    SuperpixelMap::with_meta(width, height, labels, count)
}

fn lowest_gradient(
    data: &[f32],
    width: usize,
    height: usize,
    channels: usize,
    (x0, y0): (usize, usize),
) -> (usize, usize) {
    let at = |x: usize, y: usize| &data[(y * width + x) * channels..(y * width + x + 1) * channels];
    let sq = |a: &[f32], b: &[f32]| -> f64 {
        a.iter().zip(b).map(|(&u, &v)| ((u - v) as f64).powi(2)).sum()
    };
    let gradient = |x: usize, y: usize| {
        let (xl, xr) = (x.saturating_sub(1), (x + 1).min(width - 1));
        let (yu, yd) = (y.saturating_sub(1), (y + 1).min(height - 1));
        sq(at(xr, y), at(xl, y)) + sq(at(x, yd), at(x, yu))
    };
    let mut best = (x0, y0);
    let mut best_g = gradient(x0, y0);
    for y in y0.saturating_sub(1)..=(y0 + 1).min(height - 1) {
        for x in x0.saturating_sub(1)..=(x0 + 1).min(width - 1) {
            let g = gradient(x, y);
            if g < best_g {
                best_g = g;
                best = (x, y);
            }
        }
    }
    best
}

/// SLIC on the color image, clustered in CIELAB.
pub fn slic_rgb(frame: &RgbdFrame, config: &SlicConfig) -> Result<SuperpixelMap> {
    let lab: Vec<f32> = frame.rgb.iter().flat_map(|&px| srgb_to_lab(px)).collect();
    slic(&lab, frame.width, frame.height, 3, config)
}

/// SLIC on the normalized depth map scaled by `config.depth_scale`. Invalid
/// pixels take part with depth 0.
pub fn slic_depth(frame: &RgbdFrame, config: &SlicConfig) -> Result<SuperpixelMap> {
    let scale = config.depth_scale as f32;
    let depth: Vec<f32> = frame.depth.iter().map(|&d| d * scale).collect();
    slic(&depth, frame.width, frame.height, 1, config)
}
