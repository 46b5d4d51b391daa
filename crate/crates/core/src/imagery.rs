//! RGB-D frames, the on-disk dataset layout and its manifest.
//!
//! A dataset directory holds, per frame id:
//!
//! * `<id>_rgb.png`   8-bit RGB
//! * `<id>_depth.png` 16-bit gray, millimeters, 0 = no reading
//! * `<id>_inst.png`  16-bit gray instance ids, 0 = background (optional)
//! * `<id>_class.json` instance id -> class name (optional)
//! * `<id>.spxf`      implicit per-patch features (optional)
//!
//! plus a `manifest.json` listing frame ids and their split tags.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{DynamicImage, ImageBuffer, ImageReader, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_DEPTH_MM: f32 = 10000.0;
pub const DEFAULT_MIN_OBJECTS: usize = 2;
pub const DEFAULT_MIN_OBJECT_PIXELS: usize = 50;
pub const MANIFEST_FILE: &str = "manifest.json";

/// One registered RGB + depth image with optional instance ground truth.
///
/// All per-pixel buffers are row-major with `width * height` entries.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbdFrame {
    pub frame_id: String,
    pub width: usize,
    pub height: usize,
    /// sRGB-encoded color in `[0, 1]`.
    pub rgb: Vec<[f32; 3]>,
    /// Depth normalized by the dataset's max depth, in `[0, 1]`; 0 where invalid.
    pub depth: Vec<f32>,
    pub valid: Vec<bool>,
    pub instance_gt: Option<Vec<u32>>,
    pub class_of_instance: Option<BTreeMap<u32, String>>,
}

impl RgbdFrame {
    /// A frame with no ground truth, every depth reading valid.
    pub fn new(
        frame_id: impl Into<String>,
        width: usize,
        height: usize,
        rgb: Vec<[f32; 3]>,
        depth: Vec<f32>,
    ) -> Result<Self> {
        let valid = depth.iter().map(|&d| d > 0.0).collect();
        let frame = RgbdFrame {
            frame_id: frame_id.into(),
            width,
            height,
            rgb,
            depth,
            valid,
            instance_gt: None,
            class_of_instance: None,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.width * self.height;
        let bad = |what: &str| Error::InvalidFrame(format!("{}: {what}", self.frame_id));
        if n == 0 {
            return Err(bad("empty image"));
        }
        if self.rgb.len() != n || self.depth.len() != n || self.valid.len() != n {
            return Err(bad("channel sizes disagree with width x height"));
        }
        if self.rgb.iter().flatten().any(|c| !c.is_finite() || !(0.0..=1.0).contains(c)) {
            return Err(bad("rgb values must be finite and in [0,1]"));
        }
        for (&d, &v) in self.depth.iter().zip(&self.valid) {
            if !d.is_finite() || !(0.0..=1.0).contains(&d) {
                return Err(bad("depth values must be finite and in [0,1]"));
            }
            if !v && d != 0.0 {
                return Err(bad("invalid depth pixels must hold 0"));
            }
        }
        if let Some(inst) = &self.instance_gt {
            if inst.len() != n {
                return Err(bad("instance map size disagrees with width x height"));
            }
            if let Some(classes) = &self.class_of_instance {
                let missing = inst
                    .iter()
                    .filter(|&&id| id != 0)
                    .find(|id| !classes.contains_key(id));
                if let Some(id) = missing {
                    return Err(bad(&format!("instance {id} has no class entry")));
                }
            }
        }
        Ok(())
    }

    /// Distinct non-background instance ids in the ground truth.
    pub fn instance_ids(&self) -> BTreeSet<u32> {
        self.instance_gt
            .iter()
            .flatten()
            .copied()
            .filter(|&id| id != 0)
            .collect()
    }
}

/// Split/bookkeeping record for one frame in `manifest.json`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestFrame {
    pub id: String,
    /// `train`, `test`, or absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    /// `train-eligible` or `test-only` once a zero-shot split has been applied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_shot: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub frames: Vec<ManifestFrame>,
    #[serde(default = "default_max_depth")]
    pub max_depth_mm: f32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seen_classes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unseen_classes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_seed: Option<u64>,
}

fn default_max_depth() -> f32 {
    DEFAULT_MAX_DEPTH_MM
}

impl Default for Manifest {
    fn default() -> Self {
        Manifest {
            frames: Vec::new(),
            max_depth_mm: DEFAULT_MAX_DEPTH_MM,
            seen_classes: Vec::new(),
            unseen_classes: Vec::new(),
            split_seed: None,
        }
    }
}

impl Manifest {
    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(format!("parsing {}", path.display()), e))
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        write_json(&root.join(MANIFEST_FILE), self)
    }
}

/// Paths of one frame's files. Optional files are `None` when absent on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameFiles {
    pub id: String,
    pub rgb: PathBuf,
    pub depth: PathBuf,
    pub instance: Option<PathBuf>,
    pub class: Option<PathBuf>,
    pub sidecar: Option<PathBuf>,
}

impl FrameFiles {
    fn expected(root: &Path, id: &str) -> Self {
        FrameFiles {
            id: id.to_string(),
            rgb: root.join(format!("{id}_rgb.png")),
            depth: root.join(format!("{id}_depth.png")),
            instance: Some(root.join(format!("{id}_inst.png"))),
            class: Some(root.join(format!("{id}_class.json"))),
            sidecar: Some(root.join(format!("{id}.spxf"))),
        }
    }

    fn probe(root: &Path, id: &str) -> Result<Self> {
        let mut files = Self::expected(root, id);
        for path in [&files.rgb, &files.depth] {
            if !path.is_file() {
                return Err(Error::MissingFile {
                    frame_id: id.to_string(),
                    path: path.clone(),
                });
            }
        }
        for slot in [&mut files.instance, &mut files.class, &mut files.sidecar] {
            if slot.as_ref().is_some_and(|p| !p.is_file()) {
                *slot = None;
            }
        }
        Ok(files)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub frames: Vec<FrameFiles>,
}

impl DatasetIndex {
    /// Index a dataset directory. Frame ids come from `manifest.json` when
    /// present, otherwise from a scan for `*_rgb.png` (sorted).
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let manifest = if root.join(MANIFEST_FILE).is_file() {
            Manifest::load(&root)?
        } else {
            let mut ids = Vec::new();
            let entries = fs::read_dir(&root)
                .map_err(|e| Error::io(format!("listing {}", root.display()), e))?;
            for entry in entries {
                let entry = entry.map_err(|e| Error::io(format!("listing {}", root.display()), e))?;
                let name = entry.file_name();
                if let Some(id) = name.to_str().and_then(|n| n.strip_suffix("_rgb.png")) {
                    ids.push(id.to_string());
                }
            }
            ids.sort();
            Manifest {
                frames: ids
                    .into_iter()
                    .map(|id| ManifestFrame {
                        id,
                        ..Default::default()
                    })
                    .collect(),
                ..Default::default()
            }
        };
        let frames = manifest
            .frames
            .iter()
            .map(|f| FrameFiles::probe(&root, &f.id))
            .collect::<Result<Vec<_>>>()?;
        Ok(DatasetIndex {
            root,
            manifest,
            frames,
        })
    }

    pub fn files(&self, frame_id: &str) -> Result<&FrameFiles> {
        self.frames
            .iter()
            .find(|f| f.id == frame_id)
            .ok_or_else(|| Error::UnknownFrame(frame_id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.frames.iter().map(|f| f.id.as_str())
    }

    /// Frame ids whose manifest split tag equals `split`.
    pub fn ids_in_split<'a>(&'a self, split: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.manifest
            .frames
            .iter()
            .filter(move |f| f.split.as_deref() == Some(split))
            .map(|f| f.id.as_str())
    }

    pub fn max_depth_mm(&self) -> f32 {
        self.manifest.max_depth_mm
    }

    /// Keep only the frames accepted by `keep`, in the manifest as well.
    pub fn retain(&self, mut keep: impl FnMut(&str) -> bool) -> DatasetIndex {
        let mut out = self.clone();
        out.frames.retain(|f| keep(&f.id));
        let kept: BTreeSet<&str> = out.frames.iter().map(|f| f.id.as_str()).collect();
        out.manifest.frames.retain(|f| kept.contains(f.id.as_str()));
        out
    }
}

pub fn load_frame(index: &DatasetIndex, frame_id: &str) -> Result<RgbdFrame> {
    let files = index.files(frame_id)?;
    let max_depth = index.max_depth_mm();

    let (width, height, rgb8) = read_rgb8(frame_id, &files.rgb)?;
    let dims = (width, height);
    let (dw, dh, raw_depth) = read_gray16(frame_id, &files.depth)?;
    check_dims(frame_id, &files.depth, dims, (dw, dh))?;

    let rgb = rgb8
        .chunks_exact(3)
        .map(|c| [c[0] as f32 / 255.0, c[1] as f32 / 255.0, c[2] as f32 / 255.0])
        .collect();
    let valid: Vec<bool> = raw_depth.iter().map(|&mm| mm != 0).collect();
    let depth = raw_depth
        .iter()
        .map(|&mm| (mm as f32 / max_depth).clamp(0.0, 1.0))
        .collect();

    let instance_gt = match &files.instance {
        Some(path) => {
            let (iw, ih, ids) = read_gray16(frame_id, path)?;
            check_dims(frame_id, path, dims, (iw, ih))?;
            Some(ids.into_iter().map(u32::from).collect())
        }
        None => None,
    };
    let class_of_instance = match &files.class {
        Some(path) => Some(read_class_map(frame_id, path)?),
        None => None,
    };

    let frame = RgbdFrame {
        frame_id: frame_id.to_string(),
        width,
        height,
        rgb,
        depth,
        valid,
        instance_gt,
        class_of_instance,
    };
    frame.validate()?;
    Ok(frame)
}

/// Write a frame in the dataset layout. Quantizes RGB to 8 bits and depth to
/// whole millimeters; a valid reading never quantizes to the 0 sentinel.
pub fn save_frame(frame: &RgbdFrame, root: &Path, max_depth_mm: f32) -> Result<()> {
    frame.validate()?;
    if let Some(inst) = &frame.instance_gt {
        if let Some(&id) = inst.iter().find(|&&id| id > u16::MAX as u32) {
            return Err(Error::InstanceIdOverflow(id as u64));
        }
    }
    fs::create_dir_all(root).map_err(|e| Error::io(format!("creating {}", root.display()), e))?;
    let files = FrameFiles::expected(root, &frame.frame_id);

    let rgb8: Vec<u8> = frame
        .rgb
        .iter()
        .flat_map(|px| px.map(|c| (c * 255.0).round().clamp(0.0, 255.0) as u8))
        .collect();
    write_rgb8(&files.rgb, frame.width, frame.height, rgb8)?;

    let depth_mm: Vec<u16> = frame
        .depth
        .iter()
        .zip(&frame.valid)
        .map(|(&d, &v)| {
            if v {
                (d * max_depth_mm).round().clamp(1.0, u16::MAX as f32) as u16
            } else {
                0
            }
        })
        .collect();
    write_gray16(&files.depth, frame.width, frame.height, depth_mm)?;

    if let Some(inst) = &frame.instance_gt {
        let ids = inst.iter().map(|&id| id as u16).collect();
        write_gray16(files.instance.as_ref().unwrap(), frame.width, frame.height, ids)?;
    }
    if let Some(classes) = &frame.class_of_instance {
        let as_strings: BTreeMap<String, &String> =
            classes.iter().map(|(id, c)| (id.to_string(), c)).collect();
        write_json(files.class.as_ref().unwrap(), &as_strings)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilterWarning {
    pub frame_id: String,
    pub message: String,
}

/// Keep frames with at least `min_objects` instances of at least
/// `min_object_pixels` pixels each. Frames without instance ground truth are
/// dropped with a warning.
pub fn filter_dataset(
    index: &DatasetIndex,
    min_objects: usize,
    min_object_pixels: usize,
) -> Result<(DatasetIndex, Vec<FilterWarning>)> {
    let mut keep = BTreeSet::new();
    let mut warnings = Vec::new();
    for files in &index.frames {
        let Some(path) = &files.instance else {
            warnings.push(FilterWarning {
                frame_id: files.id.clone(),
                message: "no instance ground truth; skipped".into(),
            });
            continue;
        };
        let (_, _, ids) = read_gray16(&files.id, path)?;
        let mut counts: BTreeMap<u16, usize> = BTreeMap::new();
        for id in ids.into_iter().filter(|&id| id != 0) {
            *counts.entry(id).or_default() += 1;
        }
        let big = counts.values().filter(|&&c| c >= min_object_pixels).count();
        if big >= min_objects {
            keep.insert(files.id.clone());
        }
    }
    Ok((index.retain(|id| keep.contains(id)), warnings))
}

fn check_dims(
    frame_id: &str,
    path: &Path,
    expected: (usize, usize),
    found: (usize, usize),
) -> Result<()> {
    if expected != found {
        return Err(Error::FrameDimensions {
            frame_id: frame_id.to_string(),
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

fn decode(frame_id: &str, path: &Path) -> Result<DynamicImage> {
    if !path.is_file() {
        return Err(Error::MissingFile {
            frame_id: frame_id.to_string(),
            path: path.to_path_buf(),
        });
    }
    let fail = |reason: String| Error::Decode {
        frame_id: frame_id.to_string(),
        path: path.to_path_buf(),
        reason,
    };
    ImageReader::open(path)
        .map_err(|e| fail(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| fail(e.to_string()))?
        .decode()
        .map_err(|e| fail(e.to_string()))
}

pub fn read_rgb8(frame_id: &str, path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    match decode(frame_id, path)? {
        DynamicImage::ImageRgb8(img) => {
            Ok((img.width() as usize, img.height() as usize, img.into_raw()))
        }
        other => Err(Error::Decode {
            frame_id: frame_id.to_string(),
            path: path.to_path_buf(),
            reason: format!("expected 8-bit RGB, found {:?}", other.color()),
        }),
    }
}

pub fn read_gray16(frame_id: &str, path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    match decode(frame_id, path)? {
        DynamicImage::ImageLuma16(img) => {
            Ok((img.width() as usize, img.height() as usize, img.into_raw()))
        }
        other => Err(Error::Decode {
            frame_id: frame_id.to_string(),
            path: path.to_path_buf(),
            reason: format!("expected 16-bit gray, found {:?}", other.color()),
        }),
    }
}

fn png_encoder(path: &Path) -> Result<PngEncoder<BufWriter<fs::File>>> {
    let file =
        fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    Ok(PngEncoder::new_with_quality(
        BufWriter::new(file),
        CompressionType::Default,
        FilterType::Adaptive,
    ))
}

fn encode_error(path: &Path, e: image::ImageError) -> Error {
    Error::io(format!("writing {}", path.display()), std::io::Error::other(e))
}

pub fn write_rgb8(path: &Path, width: usize, height: usize, data: Vec<u8>) -> Result<()> {
    let img = ImageBuffer::<Rgb<u8>, _>::from_raw(width as u32, height as u32, data)
        .ok_or_else(|| Error::Dimension(format!("rgb buffer for {}", path.display())))?;
    img.write_with_encoder(png_encoder(path)?)
        .map_err(|e| encode_error(path, e))
}

pub fn write_gray16(path: &Path, width: usize, height: usize, data: Vec<u16>) -> Result<()> {
    let img = ImageBuffer::<Luma<u16>, _>::from_raw(width as u32, height as u32, data)
        .ok_or_else(|| Error::Dimension(format!("gray buffer for {}", path.display())))?;
    img.write_with_encoder(png_encoder(path)?)
        .map_err(|e| encode_error(path, e))
}

fn read_class_map(frame_id: &str, path: &Path) -> Result<BTreeMap<u32, String>> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let raw: BTreeMap<String, String> = serde_json::from_str(&text)
        .map_err(|e| Error::json(format!("frame `{frame_id}`: parsing {}", path.display()), e))?;
    raw.into_iter()
        .map(|(k, v)| {
            k.parse::<u32>().map(|id| (id, v)).map_err(|_| Error::Decode {
                frame_id: frame_id.to_string(),
                path: path.to_path_buf(),
                reason: format!("instance key `{k}` is not an integer"),
            })
        })
        .collect()
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::json(format!("serializing {}", path.display()), e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(format!("parsing {}", path.display()), e))
}
