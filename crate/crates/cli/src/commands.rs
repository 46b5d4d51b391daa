use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use supergbd::imagery::{load_frame, read_json, write_json, DatasetIndex, RgbdFrame};
use supergbd::metrics::{
    aggregate, default_dilation_radius, evaluate_image, Aggregation, ClassSplit, MetricPair, ObjectCounts,
    SegEvalReport,
};
use supergbd::patch_graph::{FeatureSet, Sidecar};
use supergbd::pipeline::{
    load_prediction_map, oversegment, predict_instances, save_prediction, sha256_hex, PipelineConfig,
    PreparedFrame,
};
use supergbd::superpixel::SuperpixelMap;
use supergbd::synthgen::generate_benchmark;
use supergbd::tinynet::{self, load_checkpoint, write_checkpoint, CheckpointManifest, EpochLog};
use supergbd::zsplit::{stratified_split, tag_dataset, ClassGrouping, TEST_ONLY, TRAIN_ELIGIBLE};

use crate::config::{check, existing_dir, existing_file, usage, CliResult, RunConfig, SEED_ENV};
use crate::{
    AggregationArg, EvalArgs, InferArgs, PipelineArgs, PreprocessArgs, SplitArgs, SynthArgs, TrainArgs,
};

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| usage(format!("cannot create {}: {e}", path.display())))
}

pub fn open_dataset(data: &Path) -> CliResult<DatasetIndex> {
    existing_dir(data, "dataset")?;
    Ok(DatasetIndex::open(data)?)
}

/// Frame ids whose split or zero-shot tag equals `split`, or every frame.
pub fn select_frames(index: &DatasetIndex, split: Option<&str>) -> CliResult<Vec<String>> {
    let ids: Vec<String> = match split {
        None => index.ids().map(str::to_string).collect(),
        Some(tag) => index
            .manifest
            .frames
            .iter()
            .filter(|f| f.split.as_deref() == Some(tag) || f.zero_shot.as_deref() == Some(tag))
            .map(|f| f.id.clone())
            .collect(),
    };
    if ids.is_empty() {
        return Err(usage(match split {
            Some(tag) => format!("no frames tagged `{tag}` in {}", index.root.display()),
            None => format!("no frames in {}", index.root.display()),
        }));
    }
    Ok(ids)
}

/// Pipeline settings from the config file with flag overrides applied.
pub fn pipeline_config(cfg: &RunConfig, args: &PipelineArgs, features: Option<&str>) -> CliResult<PipelineConfig> {
    let mut p = cfg.pipeline.clone();
    if let Some(k) = args.patches {
        p.slic.target_patch_count = k;
    }
    if let Some(s) = args.suppress_plane {
        p.suppress_plane = s;
    }
    if let Some(t) = args.threshold {
        p.threshold = t;
    }
    if let Some(f) = features {
        p.features = f.parse().map_err(|e: supergbd::Error| usage(e.to_string()))?;
    }
    if let Some(dir) = &args.spx {
        existing_dir(dir, "superpixel")?;
    }
    check(p.validate())?;
    Ok(p)
}

/// Implicit features need a sidecar for every frame; report the first gap.
fn require_sidecars(index: &DatasetIndex, ids: &[String], features: FeatureSet) -> CliResult<()> {
    if !features.implicit {
        return Ok(());
    }
    for id in ids {
        if index.files(id)?.sidecar.is_none() {
            return Err(usage(format!(
                "implicit features requested but frame `{id}` has no {id}.spxf sidecar"
            )));
        }
    }
    Ok(())
}

fn sidecar_for(index: &DatasetIndex, id: &str, pipeline: &PipelineConfig) -> supergbd::Result<Option<Sidecar>> {
    if !(pipeline.features.implicit || pipeline.use_sidecar) {
        return Ok(None);
    }
    index.files(id)?.sidecar.as_deref().map(Sidecar::read).transpose()
}

pub fn prepare_frame(
    index: &DatasetIndex,
    id: &str,
    pipeline: &PipelineConfig,
    spx: Option<&Path>,
) -> supergbd::Result<(RgbdFrame, PreparedFrame)> {
    let frame = load_frame(index, id)?;
    let sidecar = sidecar_for(index, id, pipeline)?;
    let map = match spx.filter(|d| d.join(format!("{id}_spx.json")).is_file()) {
        Some(dir) => {
            let (map, used) = SuperpixelMap::load(dir, id)?;
            if used != pipeline.slic {
                log::warn!("{id}: reusing a superpixel map made with different settings");
            }
            map
        }
        None => oversegment(&frame, &pipeline.slic)?,
    };
    let prepared = PreparedFrame::from_map(&frame, map, sidecar.as_ref())?;
    Ok((frame, prepared))
}

pub fn synth(cfg: &RunConfig, a: SynthArgs) -> CliResult<()> {
    let mut spec = cfg.scene.clone();
    spec.seed = cfg.resolve_seed(a.seed)?;
    if let Some(seen) = a.seen {
        spec.seen = seen;
    }
    if let Some(unseen) = a.unseen {
        spec.unseen = unseen;
    }
    if let Some(w) = a.width {
        spec.width = w;
    }
    if let Some(h) = a.height {
        spec.height = h;
    }
    if let Some(n) = a.min_objects {
        spec.min_objects = n;
    }
    if let Some(n) = a.max_objects {
        spec.max_objects = n;
    }
    if a.no_noise {
        spec.noise = supergbd::synthgen::NoiseModel::none();
    }
    check(spec.validate())?;
    if a.train == 0 || a.test == 0 {
        return Err(usage("--train and --test must both be at least 1"));
    }
    create_dir(&a.out)?;
    let index = generate_benchmark(&spec, a.train, a.test, &a.out)?;
    let join = |v: &[String]| v.join(",");
    println!(
        "wrote {} frames to {} ({} train, {} test)",
        index.frames.len(),
        a.out.display(),
        index.ids_in_split("train").count(),
        index.ids_in_split("test").count()
    );
    println!("seen families:   {}", join(&index.manifest.seen_classes));
    println!("unseen families: {}", join(&index.manifest.unseen_classes));
    Ok(())
}

pub fn split(cfg: &RunConfig, a: SplitArgs) -> CliResult<()> {
    let index = open_dataset(&a.data)?;
    existing_file(&a.groups, "grouping file")?;
    let grouping = ClassGrouping::load(&a.groups).map_err(|e| usage(e.to_string()))?;
    let split = stratified_split(&grouping, cfg.resolve_seed(a.seed)?).map_err(|e| usage(e.to_string()))?;
    let (manifest, counts) = tag_dataset(&index, &split)?;
    manifest.save(&index.root)?;
    if let Some(out) = &a.out {
        split.save(out)?;
    }
    println!("seen:   {}", split.seen.join(","));
    println!("unseen: {}", split.unseen.join(","));
    println!(
        "{} {TRAIN_ELIGIBLE}, {} {TEST_ONLY}",
        counts.train_eligible, counts.test_only
    );
    Ok(())
}

pub fn preprocess(cfg: &RunConfig, a: PreprocessArgs) -> CliResult<()> {
    let index = open_dataset(&a.data.data)?;
    let ids = select_frames(&index, a.data.split.as_deref())?;
    let mut slic = cfg.pipeline.slic.clone();
    if let Some(k) = a.patches {
        slic.target_patch_count = k;
    }
    check(slic.validate())?;
    let out = a.out.unwrap_or_else(|| index.root.clone());
    create_dir(&out)?;
    let counts = ids
        .par_iter()
        .map(|id| {
            let frame = load_frame(&index, id)?;
            let map = oversegment(&frame, &slic)?;
            map.save(&out, id, &slic)?;
            Ok(map.patch_count())
        })
        .collect::<supergbd::Result<Vec<usize>>>()?;
    let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
    println!(
        "wrote {} superpixel maps to {} (K = {}, {mean:.1} patches per frame)",
        counts.len(),
        out.display(),
        slic.target_patch_count
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainLog<'a> {
    best_epoch: usize,
    natural_positive_fraction: f64,
    train_frames: &'a [String],
    validation_frames: &'a [String],
    epochs: &'a [EpochLog],
}

pub fn train(cfg: &RunConfig, a: TrainArgs) -> CliResult<()> {
    let index = open_dataset(&a.data.data)?;
    let ids = match a.data.split.as_deref() {
        Some(tag) => select_frames(&index, Some(tag))?,
        // Prefer an explicit training subset when the manifest has one.
        None => select_frames(&index, Some("train"))
            .or_else(|_| select_frames(&index, Some(TRAIN_ELIGIBLE)))
            .or_else(|_| select_frames(&index, None))?,
    };
    let mut tc = cfg.train.clone();
    let features = a.features.clone().unwrap_or_else(|| tc.features.to_string());
    let pipeline = pipeline_config(cfg, &a.pipeline, Some(&features))?;
    tc.features = pipeline.features;
    // The training section's own seed applies unless a global seed is given.
    if a.seed.is_some() || cfg.seed.is_some() || std::env::var_os(SEED_ENV).is_some() {
        tc.seed = cfg.resolve_seed(a.seed)?;
    }
    if let Some(p) = a.pn_ratio {
        tc.positive_fraction = p;
    }
    if let Some(e) = a.epochs {
        tc.epochs = e;
    }
    if let Some(lr) = a.lr {
        tc.learning_rate = lr;
    }
    if let Some(b) = a.batch_size {
        tc.batch_size = b;
    }
    check(tc.validate())?;
    require_sidecars(&index, &ids, pipeline.features)?;
    for id in &ids {
        if index.files(id)?.instance.is_none() {
            return Err(usage(format!("training frame `{id}` has no instance ground truth")));
        }
    }
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }

    let spx = a.pipeline.spx.as_deref();
    let frames = ids
        .par_iter()
        .map(|id| prepare_frame(&index, id, &pipeline, spx).map(|(_, p)| p))
        .collect::<supergbd::Result<Vec<_>>>()?;
    log::info!("training on {} frames with {} features", frames.len(), pipeline.features);
    let outcome = tinynet::train(&frames, &tc, &pipeline)?;

    let manifest = CheckpointManifest {
        features: pipeline.features,
        implicit_dim: outcome.implicit_dim,
        layer_dims: outcome.model.dims().to_vec(),
        parameter_count: outcome.model.parameter_count(),
        train_config: Some(tc.clone()),
    };
    write_checkpoint(&a.out, &outcome.model, &manifest)?;

    let mut text = String::new();
    let _ = writeln!(text, "epoch  steps  mean_loss  learning_rate  val_f");
    for e in &outcome.log {
        let _ = writeln!(
            text,
            "{:>5}  {:>5}  {:>9.5}  {:>13.3e}  {:>5.2}",
            e.epoch, e.steps, e.mean_loss, e.learning_rate, e.val_f
        );
    }
    let _ = writeln!(
        text,
        "best epoch {}; natural positive fraction {:.3}; {} train / {} validation frames",
        outcome.best_epoch,
        outcome.natural_positive_fraction,
        outcome.train_frames.len(),
        outcome.validation_frames.len()
    );
    let log_txt = a.out.with_extension("log");
    fs::write(&log_txt, &text).map_err(|e| supergbd::Error::Io {
        context: format!("writing {}", log_txt.display()),
        source: e,
    })?;
    write_json(
        &a.out.with_extension("log.json"),
        &TrainLog {
            best_epoch: outcome.best_epoch,
            natural_positive_fraction: outcome.natural_positive_fraction,
            train_frames: &outcome.train_frames,
            validation_frames: &outcome.validation_frames,
            epochs: &outcome.log,
        },
    )?;
    print!("{text}");
    println!("checkpoint written to {}", a.out.display());
    Ok(())
}

pub fn infer(cfg: &RunConfig, a: InferArgs) -> CliResult<()> {
    let index = open_dataset(&a.data.data)?;
    let ids = select_frames(&index, a.data.split.as_deref())?;
    existing_file(&a.checkpoint, "checkpoint")?;
    let bytes = fs::read(&a.checkpoint).map_err(|e| supergbd::Error::Io {
        context: format!("reading {}", a.checkpoint.display()),
        source: e,
    })?;
    let model = load_checkpoint(&bytes)?;
    let manifest_path = CheckpointManifest::path_for(&a.checkpoint);
    let manifest: Option<CheckpointManifest> =
        if manifest_path.is_file() { Some(read_json(&manifest_path)?) } else { None };
    let features = match (&a.features, &manifest) {
        (Some(flag), Some(m)) => {
            let set: FeatureSet = flag.parse().map_err(|e: supergbd::Error| usage(e.to_string()))?;
            if set != m.features {
                return Err(usage(format!(
                    "--features {set} conflicts with the checkpoint's {}",
                    m.features
                )));
            }
            Some(flag.clone())
        }
        (Some(flag), None) => Some(flag.clone()),
        (None, Some(m)) => Some(m.features.to_string()),
        (None, None) => None,
    };
    let mut pipeline = pipeline_config(cfg, &a.pipeline, features.as_deref())?;
    pipeline.checkpoint = Some(a.checkpoint.clone());
    require_sidecars(&index, &ids, pipeline.features)?;
    create_dir(&a.out)?;

    let sha = sha256_hex(&bytes);
    let spx = a.pipeline.spx.as_deref();
    let segments = ids
        .par_iter()
        .map(|id| {
            let (_, prepared) = prepare_frame(&index, id, &pipeline, spx)?;
            let pred = predict_instances(&prepared, &model, &pipeline)?;
            save_prediction(&pred, &a.out, id, Some(sha.clone()))?;
            Ok(pred.segment_count())
        })
        .collect::<supergbd::Result<Vec<usize>>>()?;
    println!(
        "segmented {} frames into {} instances; predictions in {}",
        segments.len(),
        segments.iter().sum::<usize>(),
        a.out.display()
    );
    Ok(())
}

/// Seen / unseen rows of a report, as read by `eval --from-report`.
#[derive(serde::Deserialize)]
struct ReportRows {
    #[serde(default)]
    all: Option<MetricPair>,
    seen: MetricPair,
    unseen: MetricPair,
    #[serde(default)]
    objects: ObjectCounts,
}

fn write_report(report: &SegEvalReport, out: &Path) -> CliResult<()> {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_json(out, report)?;
    let table = report.to_table();
    let txt = out.with_extension("txt");
    fs::write(&txt, &table).map_err(|e| supergbd::Error::Io {
        context: format!("writing {}", txt.display()),
        source: e,
    })?;
    print!("{table}");
    Ok(())
}

pub fn eval(_cfg: &RunConfig, a: EvalArgs) -> CliResult<()> {
    let aggregation = match a.aggregation {
        AggregationArg::Pooled => Aggregation::Pooled,
        AggregationArg::PerImage => Aggregation::PerImage,
    };
    if let Some(path) = &a.from_report {
        existing_file(path, "report")?;
        let rows: ReportRows = read_json(path).map_err(|e| usage(e.to_string()))?;
        let report = SegEvalReport {
            aggregation,
            images: 0,
            objects: rows.objects,
            all: rows.all.unwrap_or_default(),
            hm: Some(MetricPair::harmonic(&rows.seen, &rows.unseen)),
            seen: Some(rows.seen),
            unseen: Some(rows.unseen),
            per_image: Vec::new(),
        };
        let out = a.out.unwrap_or_else(|| path.with_extension("hm.json"));
        return write_report(&report, &out);
    }
    let (data, pred_dir) = (a.data.expect("required by clap"), a.pred.expect("required by clap"));
    let index = open_dataset(&data)?;
    let ids = select_frames(&index, a.split.as_deref())?;
    existing_dir(&pred_dir, "prediction")?;
    let m = &index.manifest;
    let split = if !m.seen_classes.is_empty() && !m.unseen_classes.is_empty() {
        Some(ClassSplit::new(m.seen_classes.clone(), m.unseen_classes.clone())?)
    } else {
        None
    };
    let evals = ids
        .par_iter()
        .map(|id| {
            let frame = load_frame(&index, id)?;
            let gt = frame.instance_gt.as_ref().ok_or_else(|| {
                supergbd::Error::InvalidFrame(format!("frame `{id}` has no instance ground truth"))
            })?;
            let (w, h, pred) = load_prediction_map(&pred_dir, id)?;
            if (w, h) != (frame.width, frame.height) {
                return Err(supergbd::Error::FrameDimensions {
                    frame_id: id.clone(),
                    path: pred_dir.join(format!("{id}_pred.png")),
                    expected: (frame.width, frame.height),
                    found: (w, h),
                });
            }
            let classes = frame.class_of_instance.as_ref().filter(|_| split.is_some());
            let radius = a.radius.unwrap_or_else(|| default_dilation_radius(h));
            evaluate_image(id, &pred, gt, w, h, classes, split.as_ref().filter(|_| classes.is_some()), radius)
        })
        .collect::<supergbd::Result<Vec<_>>>()?;
    let report = aggregate(&evals, aggregation);
    let out: PathBuf = a.out.unwrap_or_else(|| pred_dir.join("report.json"));
    write_report(&report, &out)
}
