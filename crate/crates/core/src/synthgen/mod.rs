//! Procedural tabletop scenes: analytic heightfield objects scattered on a
//! tilted table plane, rendered with per-pixel depth resolution.

mod shapes;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagery::{save_frame, write_json, DatasetIndex, Manifest, ManifestFrame, RgbdFrame, DEFAULT_MAX_DEPTH_MM};
use crate::patch_graph::compute_normals;

pub use shapes::ShapeFamily;

pub const BENCHMARK_FILE: &str = "benchmark.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneSplit {
    Train,
    Test,
}

impl SceneSplit {
    pub fn tag(self) -> &'static str {
        match self {
            SceneSplit::Train => "train",
            SceneSplit::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Standard deviation of additive Gaussian depth noise (normalized units).
    pub depth_sigma: f32,
    /// Probability that a pixel loses its depth reading.
    pub dropout: f32,
    /// Amplitude of uniform per-pixel color texture.
    pub texture: f32,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            depth_sigma: 0.002,
            dropout: 0.01,
            texture: 0.03,
        }
    }
}

impl NoiseModel {
    pub fn none() -> Self {
        NoiseModel {
            depth_sigma: 0.0,
            dropout: 0.0,
            texture: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub seed: u64,
    pub min_objects: usize,
    pub max_objects: usize,
    pub width: usize,
    pub height: usize,
    pub seen: Vec<ShapeFamily>,
    pub unseen: Vec<ShapeFamily>,
    /// Range of the table's depth change from bottom to top row.
    pub pitch_range: [f32; 2],
    /// Normalized depth of the table at the image center.
    pub table_depth: f32,
    /// Object height range in normalized depth units.
    pub object_height: [f32; 2],
    /// Object radius range as a fraction of the shorter image side.
    pub object_radius: [f32; 2],
    /// Objects whose visible area falls below this fraction of their
    /// footprint are removed from the scene.
    pub min_visible_fraction: f32,
    /// Placement attempts per object before the scene counts as overcrowded.
    pub placement_retries: usize,
    pub noise: NoiseModel,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            seed: 0,
            min_objects: 5,
            max_objects: 25,
            width: 256,
            height: 256,
            seen: vec![ShapeFamily::Box, ShapeFamily::Cylinder, ShapeFamily::Sphere, ShapeFamily::Wedge],
            unseen: vec![ShapeFamily::Ring, ShapeFamily::LBracket],
            pitch_range: [0.0, 0.1],
            table_depth: 0.35,
            object_height: [0.03, 0.09],
            object_radius: [0.045, 0.1],
            min_visible_fraction: 0.5,
            placement_retries: 200,
            noise: NoiseModel::default(),
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.width == 0 || self.height == 0 {
            return bad("scene size must be positive".into());
        }
        if self.min_objects == 0 || self.min_objects > self.max_objects {
            return bad(format!("object count range {}..={}", self.min_objects, self.max_objects));
        }
        if self.seen.is_empty() {
            return bad("at least one seen family is required".into());
        }
        let seen: BTreeSet<_> = self.seen.iter().collect();
        if let Some(f) = self.unseen.iter().find(|f| seen.contains(f)) {
            return bad(format!("family `{f}` is both seen and unseen"));
        }
        let ordered = |r: [f32; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !ordered(self.pitch_range) || !ordered(self.object_height) || !ordered(self.object_radius) {
            return bad("parameter ranges must be finite and ordered".into());
        }
        if self.object_height[0] <= 0.0 || self.object_radius[0] <= 0.0 {
            return bad("object sizes must be positive".into());
        }
        let deepest = self.table_depth + self.pitch_range[1].abs().max(self.pitch_range[0].abs()) / 2.0;
        if !(self.table_depth > self.object_height[1] && deepest <= 1.0) {
            return bad("table depth leaves no room for objects".into());
        }
        let n = &self.noise;
        if n.depth_sigma < 0.0 || !(0.0..1.0).contains(&n.dropout) || n.texture < 0.0 {
            return bad("invalid noise model".into());
        }
        Ok(())
    }
}

/// One object as placed in a scene (pixel units).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacedObject {
    pub family: ShapeFamily,
    pub center: [f32; 2],
    pub radius: f32,
    pub aspect: f32,
    pub angle: f32,
    pub height: f32,
    pub color: [f32; 3],
}

impl PlacedObject {
    /// Relative height at pixel `(x, y)` or `None` off the footprint.
    fn profile_at(&self, x: f32, y: f32) -> Option<f32> {
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        let (s, c) = self.angle.sin_cos();
        let u = (c * dx + s * dy) / self.radius;
        let v = (-s * dx + c * dy) / self.radius;
        self.family.profile(u, v, self.aspect)
    }
}

/// A rendered scene before and after noise.
#[derive(Clone, Debug)]
pub struct RenderedScene {
    pub frame: RgbdFrame,
    /// Depth before noise.
    pub clean_depth: Vec<f32>,
    pub objects: Vec<PlacedObject>,
}

fn table_depth_at(spec: &SceneSpec, pitch: f32, y: usize) -> f32 {
    spec.table_depth + pitch * (0.5 - (y as f32 + 0.5) / spec.height as f32)
}

/// Rasterize `objects` over the table. Instance ids follow the object order
/// (1-based) before removal of invisible objects; the nearest surface wins
/// every pixel, ties toward the earlier object.
pub fn render_scene<R: Rng + ?Sized>(
    spec: &SceneSpec,
    objects: &[PlacedObject],
    pitch: f32,
    table_color: [f32; 3],
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<RenderedScene> {
    let (w, h) = (spec.width, spec.height);
    let n = w * h;
    let mut depth = vec![0f32; n];
    let mut owner = vec![0u32; n];
    let mut footprint = vec![0usize; objects.len()];
    for y in 0..h {
        let table = table_depth_at(spec, pitch, y);
        for x in 0..w {
            let p = y * w + x;
            depth[p] = table;
            let (fx, fy) = (x as f32 + 0.5, y as f32 + 0.5);
            for (k, obj) in objects.iter().enumerate() {
                if let Some(rel) = obj.profile_at(fx, fy) {
                    footprint[k] += 1;
                    let d = table - obj.height * rel;
                    if d < depth[p] {
                        depth[p] = d;
                        owner[p] = k as u32 + 1;
                    }
                }
            }
        }
    }

    // Drop objects that are mostly hidden, then renumber the rest densely.
    let mut visible = vec![0usize; objects.len() + 1];
    owner.iter().for_each(|&o| visible[o as usize] += 1);
    let keep: Vec<bool> = (0..objects.len())
        .map(|k| visible[k + 1] > 0 && visible[k + 1] as f32 >= spec.min_visible_fraction * footprint[k] as f32)
        .collect();
    if keep.iter().any(|&k| !k) {
        let kept: Vec<PlacedObject> =
            objects.iter().zip(&keep).filter(|(_, &k)| k).map(|(o, _)| o.clone()).collect();
        return render_scene(spec, &kept, pitch, table_color, noise, rng);
    }

    let normals = compute_normals(&depth, &vec![true; n], w, h);
    let mut rgb: Vec<[f32; 3]> = (0..n)
        .map(|p| {
            let base = match owner[p] {
                0 => table_color,
                o => objects[o as usize - 1].color,
            };
            let shade = 0.8 + 0.2 * normals[p][2];
            base.map(|c| c * shade)
        })
        .collect();

    let clean_depth = depth.clone();
    let mut valid = vec![true; n];
    if noise.texture > 0.0 {
        for px in &mut rgb {
            for c in px.iter_mut() {
                *c += rng.random_range(-noise.texture..=noise.texture);
            }
        }
    }
    if noise.depth_sigma > 0.0 {
        let normal = Normal::new(0.0, noise.depth_sigma).map_err(|e| Error::Config(e.to_string()))?;
        for d in &mut depth {
            *d += normal.sample(rng);
        }
    }
    if noise.dropout > 0.0 {
        for (d, v) in depth.iter_mut().zip(&mut valid) {
            if rng.random::<f32>() < noise.dropout {
                *d = 0.0;
                *v = false;
            }
        }
    }
    for px in &mut rgb {
        *px = px.map(|c| c.clamp(0.0, 1.0));
    }
    for (d, &v) in depth.iter_mut().zip(&valid) {
        // Keep valid readings strictly positive so they stay valid on disk.
        *d = if v { d.clamp(1.0 / DEFAULT_MAX_DEPTH_MM, 1.0) } else { 0.0 };
    }

    let class_of_instance: BTreeMap<u32, String> = objects
        .iter()
        .enumerate()
        .map(|(k, o)| (k as u32 + 1, o.family.name().to_string()))
        .collect();
    let mut frame = RgbdFrame::new("scene", w, h, rgb, depth)?;
    frame.valid = valid;
    frame.instance_gt = Some(owner);
    frame.class_of_instance = Some(class_of_instance);
    frame.validate()?;
    Ok(RenderedScene {
        frame,
        clean_depth,
        objects: objects.to_vec(),
    })
}

fn place_objects<R: Rng + ?Sized>(
    spec: &SceneSpec,
    families: &[ShapeFamily],
    count: usize,
    rng: &mut R,
) -> Result<Vec<PlacedObject>> {
    let side = spec.width.min(spec.height) as f32;
    let mut out: Vec<PlacedObject> = Vec::with_capacity(count);
    for _ in 0..count {
        let family = families[rng.random_range(0..families.len())];
        let radius = side * rng.random_range(spec.object_radius[0]..=spec.object_radius[1]);
        let mut placed = false;
        for _ in 0..spec.placement_retries.max(1) {
            let margin = radius.min(spec.width as f32 / 2.0).min(spec.height as f32 / 2.0);
            let cx = rng.random_range(margin..=spec.width as f32 - margin);
            let cy = rng.random_range(margin..=spec.height as f32 - margin);
            let clear = out.iter().all(|o| {
                let d = ((o.center[0] - cx).powi(2) + (o.center[1] - cy).powi(2)).sqrt();
                d >= 0.75 * (o.radius + radius)
            });
            if clear {
                let palette = family.palette();
                let base = palette[rng.random_range(0..palette.len())];
                let color = base.map(|c| (c + rng.random_range(-0.05f32..=0.05)).clamp(0.0, 1.0));
                out.push(PlacedObject {
                    family,
                    center: [cx, cy],
                    radius,
                    aspect: rng.random_range(0.5..=1.0),
                    angle: rng.random_range(0.0..std::f32::consts::PI),
                    height: rng.random_range(spec.object_height[0]..=spec.object_height[1]),
                    color,
                });
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Scene(format!(
                "overcrowded: could not place object {} of {count} in {} attempts",
                out.len() + 1,
                spec.placement_retries
            )));
        }
    }
    Ok(out)
}

/// Generate one scene. Train scenes draw only seen families; test scenes
/// draw from seen and unseen families and are resampled (up to 100 times)
/// until an unseen object is visible.
pub fn generate_scene<R: Rng + ?Sized>(spec: &SceneSpec, split: SceneSplit, rng: &mut R) -> Result<RgbdFrame> {
    spec.validate()?;
    let families: Vec<ShapeFamily> = match split {
        SceneSplit::Train => spec.seen.clone(),
        SceneSplit::Test => spec.seen.iter().chain(&spec.unseen).copied().collect(),
    };
    let unseen: BTreeSet<&str> = spec.unseen.iter().map(|f| f.name()).collect();
    let attempts = if split == SceneSplit::Test && !unseen.is_empty() { 100 } else { 1 };
    let mut last = None;
    for _ in 0..attempts {
        let count = rng.random_range(spec.min_objects..=spec.max_objects);
        let objects = place_objects(spec, &families, count, rng)?;
        let pitch = rng.random_range(spec.pitch_range[0]..=spec.pitch_range[1]);
        let table_color = [0.62, 0.52, 0.40].map(|c: f32| c + rng.random_range(-0.1f32..=0.1));
        let scene = render_scene(spec, &objects, pitch, table_color, &spec.noise, rng)?;
        let has_unseen = scene
            .frame
            .class_of_instance
            .as_ref()
            .is_some_and(|m| m.values().any(|c| unseen.contains(c.as_str())));
        if has_unseen || attempts == 1 {
            return Ok(scene.frame);
        }
        last = Some(scene.frame);
    }
    Ok(last.expect("at least one attempt"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkFrame {
    pub id: String,
    pub split: SceneSplit,
    pub seed: u64,
}

/// Everything needed to regenerate a benchmark exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub spec: SceneSpec,
    pub seen: Vec<String>,
    pub unseen: Vec<String>,
    pub frames: Vec<BenchmarkFrame>,
}

/// Frame ids and per-frame seeds of a benchmark, derived from `spec.seed`.
pub fn plan_benchmark(spec: &SceneSpec, n_train: usize, n_test: usize) -> Vec<BenchmarkFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let train = (0..n_train).map(|i| (format!("train_{i:04}"), SceneSplit::Train));
    let test = (0..n_test).map(|i| (format!("test_{i:04}"), SceneSplit::Test));
    train
        .chain(test)
        .map(|(id, split)| BenchmarkFrame {
            id,
            split,
            seed: rng.random(),
        })
        .collect()
}

/// Generate the frame described by one benchmark entry.
pub fn generate_benchmark_frame(spec: &SceneSpec, entry: &BenchmarkFrame) -> Result<RgbdFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(entry.seed);
    let mut frame = generate_scene(spec, entry.split, &mut rng)?;
    frame.frame_id = entry.id.clone();
    Ok(frame)
}

/// Write a full dataset directory: frames, `manifest.json` with split tags
/// and the family partition, and `benchmark.json`.
pub fn generate_benchmark(spec: &SceneSpec, n_train: usize, n_test: usize, out_root: &Path) -> Result<DatasetIndex> {
    spec.validate()?;
    if n_train == 0 || n_test == 0 {
        return Err(Error::Config("benchmark needs at least one train and one test frame".into()));
    }
    fs::create_dir_all(out_root).map_err(|e| Error::io(format!("creating {}", out_root.display()), e))?;
    let plan = plan_benchmark(spec, n_train, n_test);
    plan.par_iter().try_for_each(|entry| {
        let frame = generate_benchmark_frame(spec, entry)?;
        save_frame(&frame, out_root, DEFAULT_MAX_DEPTH_MM)
    })?;

    let names = |v: &[ShapeFamily]| v.iter().map(|f| f.name().to_string()).collect::<Vec<_>>();
    let manifest = Manifest {
        frames: plan
            .iter()
            .map(|e| ManifestFrame {
                id: e.id.clone(),
                split: Some(e.split.tag().to_string()),
                zero_shot: None,
            })
            .collect(),
        max_depth_mm: DEFAULT_MAX_DEPTH_MM,
        seen_classes: names(&spec.seen),
        unseen_classes: names(&spec.unseen),
        split_seed: None,
    };
    manifest.save(out_root)?;
    write_json(
        &out_root.join(BENCHMARK_FILE),
        &BenchmarkRecord {
            spec: spec.clone(),
            seen: names(&spec.seen),
            unseen: names(&spec.unseen),
            frames: plan,
        },
    )?;
    DatasetIndex::open(out_root)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(spec: SceneSpec) -> SceneSpec {
        SceneSpec {
            noise: NoiseModel::none(),
            pitch_range: [0.0, 0.0],
            ..spec
        }
    }

    fn object(family: ShapeFamily, center: [f32; 2], radius: f32, height: f32) -> PlacedObject {
        PlacedObject {
            family,
            center,
            radius,
            aspect: 1.0,
            angle: 0.0,
            height,
            color: [0.8, 0.1, 0.1],
        }
    }

    #[test]
    fn single_sphere_footprint() {
        let spec = quiet(SceneSpec {
            width: 64,
            height: 64,
            ..Default::default()
        });
        let sphere = object(ShapeFamily::Sphere, [32.0, 32.0], 10.0, 0.05);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = render_scene(&spec, &[sphere], 0.0, [0.5; 3], &NoiseModel::none(), &mut rng).unwrap();
        let gt = s.frame.instance_gt.as_ref().unwrap();
        for y in 0..64 {
            for x in 0..64 {
                let p = y * 64 + x;
                let r2 = (x as f32 + 0.5 - 32.0).powi(2) + (y as f32 + 0.5 - 32.0).powi(2);
                assert_eq!(gt[p] == 1, r2 <= 100.0, "pixel ({x}, {y})");
                if gt[p] == 1 {
                    assert!(s.frame.depth[p] < spec.table_depth);
                }
            }
        }
    }

    #[test]
    fn nearer_box_wins_contested_pixels() {
        let spec = quiet(SceneSpec {
            width: 48,
            height: 32,
            ..Default::default()
        });
        let low = object(ShapeFamily::Box, [18.0, 16.0], 10.0, 0.03);
        let high = object(ShapeFamily::Box, [28.0, 16.0], 10.0, 0.08);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = render_scene(&spec, &[low.clone(), high.clone()], 0.0, [0.5; 3], &NoiseModel::none(), &mut rng)
            .unwrap();
        let gt = s.frame.instance_gt.as_ref().unwrap();
        let mut contested = 0;
        for p in 0..gt.len() {
            let (x, y) = ((p % 48) as f32 + 0.5, (p / 48) as f32 + 0.5);
            let dl = low.profile_at(x, y).map(|r| spec.table_depth - 0.03 * r);
            let dh = high.profile_at(x, y).map(|r| spec.table_depth - 0.08 * r);
            if let (Some(a), Some(b)) = (dl, dh) {
                contested += 1;
                assert_eq!(gt[p], if a <= b { 1 } else { 2 });
            }
        }
        assert!(contested > 0);
    }

    #[test]
    fn same_seed_same_scene() {
        let spec = SceneSpec {
            width: 96,
            height: 96,
            ..Default::default()
        };
        let a = generate_scene(&spec, SceneSplit::Test, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = generate_scene(&spec, SceneSplit::Test, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a.rgb, b.rgb);
        assert_eq!(a.depth, b.depth);
        assert_eq!(a.instance_gt, b.instance_gt);
    }

    #[test]
    fn train_scenes_use_seen_families_only() {
        let spec = SceneSpec {
            width: 128,
            height: 128,
            ..Default::default()
        };
        let seen: BTreeSet<&str> = spec.seen.iter().map(|f| f.name()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let f = generate_scene(&spec, SceneSplit::Train, &mut rng).unwrap();
            assert!(f.class_of_instance.unwrap().values().all(|c| seen.contains(c.as_str())));
        }
    }

    #[test]
    fn overcrowding_is_reported() {
        let spec = SceneSpec {
            width: 32,
            height: 32,
            min_objects: 25,
            max_objects: 25,
            object_radius: [0.3, 0.3],
            placement_retries: 20,
            ..Default::default()
        };
        let err = generate_scene(&spec, SceneSplit::Train, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(err.to_string().contains("overcrowded"));
    }

    #[test]
    fn overlapping_families_are_rejected() {
        let spec = SceneSpec {
            unseen: vec![ShapeFamily::Box],
            ..Default::default()
        };
        assert!(spec.validate().is_err());
    }
}
