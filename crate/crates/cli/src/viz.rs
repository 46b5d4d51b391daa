//! Static overlays: instance boundaries drawn over the input images.

use std::path::Path;

use rayon::prelude::*;
use supergbd::imagery::{load_frame, write_rgb8, RgbdFrame};
use supergbd::pipeline::load_prediction_map;
use supergbd::superpixel::{slic_depth, slic_rgb};

use crate::commands::{open_dataset, select_frames};
use crate::config::{check, existing_dir, usage, CliResult, RunConfig};
use crate::VizArgs;

/// Distinct, deterministic color for a segment id (golden-angle hue walk).
pub fn id_color(id: u32) -> [u8; 3] {
    let h = (id as f32 * 0.618_034).fract() * 6.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    [r, g, b].map(|c: f32| (55.0 + 200.0 * c) as u8)
}

/// Color pixels on a label boundary (a 4-neighbor with another label) with
/// the color of the non-background side.
pub fn draw_boundaries(base: &mut [[u8; 3]], labels: &[u32], width: usize, height: usize) {
    for y in 0..height {
        for x in 0..width {
            let p = y * width + x;
            let here = labels[p];
            let mut other = None;
            if x + 1 < width && labels[p + 1] != here {
                other = Some(labels[p + 1]);
            } else if y + 1 < height && labels[p + width] != here {
                other = Some(labels[p + width]);
            } else if x > 0 && labels[p - 1] != here {
                other = Some(labels[p - 1]);
            } else if y > 0 && labels[p - width] != here {
                other = Some(labels[p - width]);
            }
            if let Some(o) = other {
                base[p] = id_color(if here != 0 { here } else { o });
            }
        }
    }
}

fn rgb_base(frame: &RgbdFrame) -> Vec<[u8; 3]> {
    frame.rgb.iter().map(|px| px.map(|c| (c * 255.0).round().clamp(0.0, 255.0) as u8)).collect()
}

/// Near is bright, far is dark, invalid is black.
fn depth_base(frame: &RgbdFrame) -> Vec<[u8; 3]> {
    let valid = frame.depth.iter().zip(&frame.valid).filter(|(_, &v)| v).map(|(&d, _)| d);
    let (lo, hi) = valid.fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
    let span = (hi - lo).max(1e-6);
    frame
        .depth
        .iter()
        .zip(&frame.valid)
        .map(|(&d, &v)| {
            let g = if v { (40.0 + 215.0 * (hi - d) / span) as u8 } else { 0 };
            [g; 3]
        })
        .collect()
}

fn write(path: &Path, w: usize, h: usize, img: Vec<[u8; 3]>) -> supergbd::Result<()> {
    write_rgb8(path, w, h, img.into_iter().flatten().collect())
}

pub fn run(cfg: &RunConfig, a: VizArgs) -> CliResult<()> {
    let index = open_dataset(&a.data.data)?;
    let ids = select_frames(&index, a.data.split.as_deref())?;
    existing_dir(&a.pred, "prediction")?;
    let mut slic = cfg.pipeline.slic.clone();
    if let Some(k) = a.patches {
        slic.target_patch_count = k;
    }
    check(slic.validate())?;
    let out = a.out.clone().unwrap_or_else(|| a.pred.clone());
    std::fs::create_dir_all(&out).map_err(|e| usage(format!("cannot create {}: {e}", out.display())))?;

    ids.par_iter()
        .map(|id| {
            let frame = load_frame(&index, id)?;
            let (w, h) = (frame.width, frame.height);
            let (pw, ph, pred) = load_prediction_map(&a.pred, id)?;
            if (pw, ph) != (w, h) {
                return Err(supergbd::Error::FrameDimensions {
                    frame_id: id.clone(),
                    path: a.pred.join(format!("{id}_pred.png")),
                    expected: (w, h),
                    found: (pw, ph),
                });
            }
            let mut overlay = rgb_base(&frame);
            draw_boundaries(&mut overlay, &pred, w, h);
            write(&out.join(format!("{id}_overlay.png")), w, h, overlay)?;

            let mut rgb_panel = rgb_base(&frame);
            draw_boundaries(&mut rgb_panel, slic_rgb(&frame, &slic)?.labels(), w, h);
            write(&out.join(format!("{id}_overlay_rgb.png")), w, h, rgb_panel)?;

            let mut depth_panel = depth_base(&frame);
            draw_boundaries(&mut depth_panel, slic_depth(&frame, &slic)?.labels(), w, h);
            write(&out.join(format!("{id}_overlay_depth.png")), w, h, depth_panel)
        })
        .collect::<supergbd::Result<Vec<()>>>()?;
    println!("wrote overlays for {} frames to {}", ids.len(), out.display());
    Ok(())
}
