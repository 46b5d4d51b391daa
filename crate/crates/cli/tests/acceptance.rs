//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//! Run with `--nocapture` to see the lines; `--test-threads 1` keeps timings honest.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use supergbd::metrics::{
    aggregate, evaluate_image, harmonic_mean, hungarian_match, overlap_prf, pairwise_f_matrix, Aggregation,
    ClassSplit, Prf,
};
use supergbd::patch_graph::{FeatureSet, PairSampler};
use supergbd::pipeline::{infer, prepare, segment_with_probabilities, PipelineConfig, PreparedFrame};
use supergbd::superpixel::{intersect_maps, slic, SlicConfig, SuperpixelMap, PATCH_PRESETS};
use supergbd::synthgen::{generate_benchmark_frame, plan_benchmark, NoiseModel, SceneSpec, SceneSplit};
use supergbd::tinynet::{save_checkpoint, train, MlpModel, Mode, TrainConfig};

fn verdict(id: u32, name: &str, pass: bool, detail: String) {
    println!("criterion {id:>2} {}: {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

// ---------- 1. harmonic mean ----------

#[test]
fn c01_harmonic_mean_reproduction() {
    let cases = [((79.23, 67.53), 72.92), ((73.05, 68.53), 70.72), ((76.31, 76.66), 76.48)];
    let got: Vec<f64> = cases.iter().map(|((s, u), _)| harmonic_mean(*s, *u)).collect();
    let pass = cases.iter().zip(&got).all(|((_, want), g)| (g - want).abs() <= 0.01);
    let detail = got.iter().map(|g| format!("{g:.4}")).collect::<Vec<_>>().join(", ");
    verdict(1, "harmonic mean", pass, detail);
}

// ---------- 2. Hungarian vs exhaustive matching ----------

/// Overlap P/R/F of every maximum-total-F injection, found by enumeration.
fn exhaustive_overlap(pred: &[u32], gt: &[u32]) -> Vec<Prf> {
    let ids = |m: &[u32]| m.iter().copied().filter(|&i| i != 0).collect::<BTreeSet<_>>().into_iter().collect::<Vec<_>>();
    let (g_ids, s_ids) = (ids(gt), ids(pred));
    let area = |m: &[u32], id: u32| m.iter().filter(|&&v| v == id).count() as f64;
    let inter = |g: u32, s: u32| gt.iter().zip(pred).filter(|(&a, &b)| a == g && b == s).count() as f64;
    let g_area: Vec<f64> = g_ids.iter().map(|&g| area(gt, g)).collect();
    let s_area: Vec<f64> = s_ids.iter().map(|&s| area(pred, s)).collect();
    let inters: Vec<Vec<f64>> = g_ids.iter().map(|&g| s_ids.iter().map(|&s| inter(g, s)).collect()).collect();

    // every assignment of gt objects to distinct predictions or to nothing
    let mut best = f64::NEG_INFINITY;
    let mut optima: Vec<Vec<Option<usize>>> = Vec::new();
    let mut current = vec![None; g_ids.len()];
    fn walk(
        j: usize,
        used: &mut Vec<bool>,
        current: &mut Vec<Option<usize>>,
        score: &dyn Fn(&[Option<usize>]) -> f64,
        best: &mut f64,
        optima: &mut Vec<Vec<Option<usize>>>,
    ) {
        if j == current.len() {
            let total = score(current);
            if total > *best + 1e-12 {
                *best = total;
                optima.clear();
            }
            if (total - *best).abs() <= 1e-12 {
                optima.push(current.clone());
            }
            return;
        }
        current[j] = None;
        walk(j + 1, used, current, score, best, optima);
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                current[j] = Some(i);
                walk(j + 1, used, current, score, best, optima);
                used[i] = false;
                current[j] = None;
            }
        }
    }
    let score = |assign: &[Option<usize>]| {
        assign
            .iter()
            .enumerate()
            .filter_map(|(j, a)| a.map(|i| 2.0 * inters[j][i] / (g_area[j] + s_area[i])))
            .sum::<f64>()
    };
    let mut used = vec![false; s_ids.len()];
    walk(0, &mut used, &mut current, &score, &mut best, &mut optima);

    let total_s: f64 = s_area.iter().sum();
    let total_g: f64 = g_area.iter().sum();
    optima
        .iter()
        .map(|assign| {
            let matched: f64 = assign.iter().enumerate().filter_map(|(j, a)| a.map(|i| inters[j][i])).sum();
            let p = if total_s > 0.0 { 100.0 * matched / total_s } else { 0.0 };
            let r = if total_g > 0.0 { 100.0 * matched / total_g } else { 0.0 };
            let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            Prf { p, r, f }
        })
        .collect()
}

#[test]
fn c02_hungarian_matches_exhaustive_search() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let trials = 600;
    let mut mismatches = 0;
    for _ in 0..trials {
        let (w, h) = (rng.random_range(2..=16), rng.random_range(2..=16));
        let (ng, ns) = (rng.random_range(0..=6u32), rng.random_range(0..=6u32));
        // blocky maps so objects overlap in varied proportions
        let block = rng.random_range(1..=4);
        let map = |n: u32, rng: &mut ChaCha8Rng| {
            let cells: Vec<u32> = (0..(w / block + 1) * (h / block + 1)).map(|_| rng.random_range(0..=n)).collect();
            (0..w * h).map(|p| cells[(p / w / block) * (w / block + 1) + (p % w) / block]).collect::<Vec<u32>>()
        };
        let gt = map(ng, &mut rng);
        let pred = map(ns, &mut rng);
        let got = overlap_prf(&pred, &gt, &hungarian_match(&pairwise_f_matrix(&pred, &gt).unwrap()));
        let close = |a: &Prf| (a.p - got.p).abs() <= 1e-9 && (a.r - got.r).abs() <= 1e-9 && (a.f - got.f).abs() <= 1e-9;
        if !exhaustive_overlap(&pred, &gt).iter().any(close) {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        2,
        "Hungarian overlap vs exhaustive oracle",
        mismatches == 0 && within(elapsed, 30),
        format!("{trials} pairs, {mismatches} mismatches, {:.1}s", elapsed.as_secs_f64()),
    );
}

// ---------- 3. SLIC invariants ----------

/// Contiguous ids, 4-connected patches, consistent areas.
fn partition_ok(map: &SuperpixelMap) -> bool {
    let (w, h) = (map.width(), map.height());
    let l = map.labels();
    let n = map.patch_count();
    if l.iter().copied().collect::<BTreeSet<_>>() != (0..n as u32).collect() {
        return false;
    }
    let mut seen = vec![false; w * h];
    let mut comps = 0;
    for s in 0..w * h {
        if seen[s] {
            continue;
        }
        comps += 1;
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(p) = stack.pop() {
            let (x, y) = (p % w, p / w);
            for q in [(x > 0).then(|| p - 1), (x + 1 < w).then(|| p + 1), (y > 0).then(|| p - w), (y + 1 < h).then(|| p + w)]
                .into_iter()
                .flatten()
            {
                if !seen[q] && l[q] == l[p] {
                    seen[q] = true;
                    stack.push(q);
                }
            }
        }
    }
    let mut areas = vec![0usize; n];
    l.iter().for_each(|&v| areas[v as usize] += 1);
    comps == n && map.patches().iter().zip(&areas).all(|(m, &a)| m.area == a)
}

/// Square side of the checkerboard follows the seed spacing for `k`.
fn structured_image(i: usize, w: usize, h: usize, k: usize) -> Vec<f32> {
    let side = ((w * h / k) as f64).sqrt() as usize;
    (0..w * h)
        .flat_map(|p| {
            let (x, y) = (p % w, p / w);
            let v: [f32; 3] = match i {
                0 => [50.0, 0.0, 0.0],
                1 => if x < w / 2 { [20.0, 40.0, 10.0] } else { [80.0, -30.0, 5.0] },
                2 => if y < h / 3 { [30.0, 0.0, 0.0] } else { [70.0, 0.0, 0.0] },
                3 => if (x / side + y / side) % 2 == 0 { [0.0, 0.0, 0.0] } else { [100.0, 0.0, 0.0] },
                4 => [100.0 * x as f32 / w as f32, 0.0, 0.0],
                5 => [100.0 * y as f32 / h as f32, 50.0 * x as f32 / w as f32, 0.0],
                6 => if (x as f32 - w as f32 / 2.0).hypot(y as f32 - h as f32 / 2.0) < w as f32 / 4.0 { [90.0, 0.0, 0.0] } else { [10.0, 0.0, 0.0] },
                7 => [if (x + y) / 10 % 2 == 0 { 40.0 } else { 60.0 }, 0.0, 0.0],
                8 => [(x / 16 * 20 % 100) as f32, (y / 16 * 30 % 100) as f32, 0.0],
                _ => [50.0 + 40.0 * ((x as f32) / 5.0).sin(), 0.0, 0.0],
            };
            v
        })
        .collect()
}

#[test]
fn c03_slic_invariants() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut failures = Vec::new();
    let mut runs = 0;
    let images: Vec<(String, usize, usize, Vec<f32>)> = (0..100)
        .map(|i| {
            let (w, h) = (rng.random_range(64..=96), rng.random_range(64..=96));
            let noise = rng.random_range(0.0..30.0f32);
            let base: [f32; 3] = [rng.random_range(0.0..100.0), rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)];
            let data = (0..w * h * 3).map(|c| base[c % 3] + rng.random_range(-noise..=noise)).collect();
            (format!("random {i}"), w, h, data)
        })
        .collect();
    let structured: Vec<(String, usize, usize, Vec<f32>)> = (0..10)
        .flat_map(|i| PATCH_PRESETS.map(|k| (format!("structured {i} K={k}"), 96, 80, structured_image(i, 96, 80, k))))
        .collect();
    for (name, w, h, data) in images.iter().chain(&structured) {
        for k in PATCH_PRESETS {
            if name.starts_with("structured") && !name.ends_with(&format!("K={k}")) {
                continue;
            }
            let cfg = SlicConfig::with_patches(k);
            let map = slic(data, *w, *h, 3, &cfg).unwrap();
            runs += 1;
            let n = map.patch_count();
            let count_ok = w * h < 4 * k || (k / 2..=2 * k).contains(&n);
            let deterministic = slic(data, *w, *h, 3, &cfg).unwrap() == map;
            if !(partition_ok(&map) && count_ok && deterministic) {
                failures.push(format!("{name} K={k} N={n}"));
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        3,
        "SLIC invariants",
        failures.is_empty() && within(elapsed, 60),
        format!("{runs} runs, failures {failures:?}, {:.1}s", elapsed.as_secs_f64()),
    );
}

// ---------- 4. combination refinement ----------

#[test]
fn c04_combination_refinement() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut bad = 0;
    for _ in 0..100 {
        let (w, h) = (rng.random_range(4..=40), rng.random_range(4..=40));
        let keys = |rng: &mut ChaCha8Rng| (0..w * h).map(|_| rng.random_range(0..5u8)).collect::<Vec<_>>();
        let a = SuperpixelMap::from_keys(w, h, &keys(&mut rng)).unwrap();
        let b = SuperpixelMap::from_keys(w, h, &keys(&mut rng)).unwrap();
        let inter = intersect_maps(&a, &b).unwrap();
        let mut parent: BTreeMap<u32, (u32, u32)> = BTreeMap::new();
        let refines = inter.map.labels().iter().enumerate().all(|(p, &l)| {
            let pair = (a.labels()[p], b.labels()[p]);
            *parent.entry(l).or_insert(pair) == pair
        });
        if !refines || !partition_ok(&inter.map) {
            bad += 1;
        }
    }
    let left_right = SuperpixelMap::from_keys(4, 4, &(0..16).map(|p| p % 4 / 2).collect::<Vec<_>>()).unwrap();
    let top_bottom = SuperpixelMap::from_keys(4, 4, &(0..16).map(|p| p / 8).collect::<Vec<_>>()).unwrap();
    let quad = intersect_maps(&left_right, &top_bottom).unwrap().absorb(1).0;
    let quadrants: BTreeSet<Vec<usize>> =
        (0..quad.patch_count() as u32).map(|id| (0..16).filter(|&p| quad.labels()[p] == id).collect()).collect();
    let want: BTreeSet<Vec<usize>> =
        [vec![0, 1, 4, 5], vec![2, 3, 6, 7], vec![8, 9, 12, 13], vec![10, 11, 14, 15]].into_iter().collect();
    let elapsed = start.elapsed();
    verdict(
        4,
        "combination refinement",
        bad == 0 && quadrants == want && within(elapsed, 10),
        format!("100 pairs, {bad} violations, quadrant case {} patches, {:.2}s", quad.patch_count(), elapsed.as_secs_f64()),
    );
}

// ---------- 5. gradient check ----------

fn oracle_loss(model: &MlpModel, x: &[f64], y: &[f64], layer: usize, is_weight: bool, index: usize, value: f64) -> f64 {
    let dims = model.dims();
    let mut total = 0.0;
    for (s, &label) in y.iter().enumerate() {
        let mut a = x[s * dims[0]..(s + 1) * dims[0]].to_vec();
        for l in 0..model.layer_count() {
            let (din, dout) = (dims[l], dims[l + 1]);
            let mut w: Vec<f64> = model.weights(l).iter().map(|&v| v as f64).collect();
            let mut b: Vec<f64> = model.biases(l).iter().map(|&v| v as f64).collect();
            if l == layer {
                if is_weight {
                    w[index] = value;
                } else {
                    b[index] = value;
                }
            }
            let mut z: Vec<f64> = (0..dout).map(|o| b[o] + (0..din).map(|i| w[o * din + i] * a[i]).sum::<f64>()).collect();
            if l + 1 < model.layer_count() {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            a = z;
        }
        let p = 1.0 / (1.0 + (-a[0]).exp());
        total -= label * p.ln() + (1.0 - label) * (1.0 - p).ln();
    }
    total / y.len() as f64
}

#[test]
fn c05_gradient_check() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut shapes = Vec::new();
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let input = rng.random_range(9..=30);
        let dims: Vec<usize> = [input]
            .into_iter()
            .chain((0..rng.random_range(1..=3)).map(|_| rng.random_range(2..=32)))
            .chain([1])
            .collect();
        let model = MlpModel::new(&dims, 0.0, &mut rng).unwrap();
        let batch = 5;
        let x: Vec<f32> = (0..batch * input).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f32> = (0..batch).map(|_| rng.random_range(0..2) as f32).collect();
        let (_, grads) = model.loss_and_gradients(&x, &y, batch, Mode::Eval).unwrap();
        let xd: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let yd: Vec<f64> = y.iter().map(|&v| v as f64).collect();
        let h = 1e-6;
        for l in 0..model.layer_count() {
            for (is_weight, params, analytic) in
                [(true, model.weights(l), &grads.weights[l]), (false, model.biases(l), &grads.biases[l])]
            {
                for (i, (&p, &a)) in params.iter().zip(analytic).enumerate() {
                    let numeric = (oracle_loss(&model, &xd, &yd, l, is_weight, i, p as f64 + h)
                        - oracle_loss(&model, &xd, &yd, l, is_weight, i, p as f64 - h))
                        / (2.0 * h);
                    let a = a as f64;
                    worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3));
                }
            }
        }
        shapes.push(dims);
    }
    let elapsed = start.elapsed();
    verdict(
        5,
        "gradient check",
        worst <= 1e-4 && within(elapsed, 30),
        format!("10 models {shapes:?}, worst relative error {worst:.2e}, {:.1}s", elapsed.as_secs_f64()),
    );
}

// ---------- shared synthetic benchmark ----------

fn benchmark(spec: &SceneSpec, n_train: usize, n_test: usize, config: &PipelineConfig) -> Vec<PreparedFrame> {
    plan_benchmark(spec, n_train, n_test)
        .par_iter()
        .map(|entry| prepare(&generate_benchmark_frame(spec, entry).unwrap(), config, None).unwrap())
        .collect()
}

fn tabletop_config() -> PipelineConfig {
    PipelineConfig {
        suppress_plane: true,
        ..PipelineConfig::default()
    }
}

// ---------- 6. sampler ratios ----------

#[test]
fn c06_sampler_ratios() {
    let spec = SceneSpec::default();
    let frames = benchmark(&spec, 40, 1, &tabletop_config());
    let train_frames = &frames[..40];
    let graphs = train_frames.iter().map(|f| &f.graph);
    let sampler = PairSampler::new(graphs, FeatureSet::EXPLICIT).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut fractions = Vec::new();
    for target in [0.5, 0.25, 0.1] {
        let samples = sampler.sample(10_000, target, &mut rng).unwrap();
        fractions.push((target, samples.iter().filter(|s| s.label).count() as f64 / samples.len() as f64));
    }
    let (pos, total) = train_frames.iter().flat_map(|f| &f.graph.edges).fold((0usize, 0usize), |(p, t), e| {
        (p + (e.gt == Some(true)) as usize, t + 1)
    });
    let natural = pos as f64 / total as f64;
    let pass = fractions.iter().all(|(t, f)| (t - f).abs() <= 0.02) && (0.6..=0.95).contains(&natural);
    verdict(
        6,
        "sampler ratios",
        pass,
        format!("target/empirical {fractions:?}, natural positive fraction {natural:.3} over {total} edges"),
    );
}

// ---------- 7. oracle-edge ceiling ----------

#[test]
fn c07_oracle_edge_ceiling() {
    let start = Instant::now();
    let spec = SceneSpec {
        noise: NoiseModel::none(),
        ..SceneSpec::default()
    };
    let config = tabletop_config();
    let frames = benchmark(&spec, 1, 50, &config);
    let evals: Vec<_> = frames[1..]
        .par_iter()
        .map(|f| {
            let pred = segment_with_probabilities(f, f.oracle_probabilities().unwrap(), &config).unwrap();
            evaluate_image(&f.frame_id, &pred.instance_map, f.instance_gt.as_ref().unwrap(), f.width(), f.height(), None, None, 1)
                .unwrap()
        })
        .collect();
    let f = aggregate(&evals, Aggregation::Pooled).all.overlap.f;
    let elapsed = start.elapsed();
    verdict(
        7,
        "oracle-edge ceiling",
        f >= 95.0 && within(elapsed, 120),
        format!("overlap F {f:.2} on 50 clean test frames (K=128), {:.1}s", elapsed.as_secs_f64()),
    );
}

// ---------- 8. end-to-end zero-shot benchmark ----------

fn unseen_f(frames: &[PreparedFrame], split: &ClassSplit, config: &PipelineConfig, probs: impl Fn(&PreparedFrame) -> Vec<f32> + Sync) -> f64 {
    let evals: Vec<_> = frames
        .par_iter()
        .map(|f| {
            let pred = segment_with_probabilities(f, probs(f), config).unwrap();
            evaluate_image(
                &f.frame_id,
                &pred.instance_map,
                f.instance_gt.as_ref().unwrap(),
                f.width(),
                f.height(),
                f.class_of_instance.as_ref(),
                Some(split),
                1,
            )
            .unwrap()
        })
        .collect();
    aggregate(&evals, Aggregation::Pooled).unseen.unwrap().overlap.f
}

#[test]
fn c08_end_to_end_zero_shot() {
    let start = Instant::now();
    let spec = SceneSpec::default();
    let config = tabletop_config();
    let frames = benchmark(&spec, 200, 50, &config);
    let (train_frames, test_frames) = frames.split_at(200);
    let split = ClassSplit::new(spec.seen.iter().map(|f| f.name()), spec.unseen.iter().map(|f| f.name())).unwrap();

    let merge_all = unseen_f(test_frames, &split, &config, |f| vec![1.0; f.graph.edges.len()]);
    let merge_none = unseen_f(test_frames, &split, &config, |f| vec![0.0; f.graph.edges.len()]);
    let mut scores = Vec::new();
    for positive_fraction in [0.25, 0.8] {
        let tc = TrainConfig {
            positive_fraction,
            ..TrainConfig::default()
        };
        let model = train(train_frames, &tc, &config).unwrap().model;
        let probs = |f: &PreparedFrame| supergbd::pipeline::score_edges(&model, &f.graph, tc.features).unwrap();
        scores.push(unseen_f(test_frames, &split, &config, probs));
    }
    let (f25, f80) = (scores[0], scores[1]);
    let elapsed = start.elapsed();
    let checks = [
        ("unseen F >= 70", f25 >= 70.0),
        ("beats merge-all by 20", f25 >= merge_all + 20.0),
        ("beats merge-none by 20", f25 >= merge_none + 20.0),
        ("25/75 >= 80/20", f25 >= f80),
        ("under 15 min", within(elapsed, 900)),
    ];
    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    verdict(
        8,
        "end-to-end zero-shot benchmark",
        failed.is_empty(),
        format!(
            "unseen F 25/75 {f25:.2}, 80/20 {f80:.2}, merge-all {merge_all:.2}, merge-none {merge_none:.2}, {:.0}s; failed checks {failed:?}",
            elapsed.as_secs_f64()
        ),
    );
}

// ---------- 9. resource envelope ----------

#[test]
fn c09_resource_envelope() {
    let spec = SceneSpec::default();
    let entry = plan_benchmark(&spec, 0, 1).remove(0);
    assert_eq!(entry.split, SceneSplit::Test);
    let frame = generate_benchmark_frame(&spec, &entry).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = MlpModel::with_default_hidden(FeatureSet::EXPLICIT.pair_dim(0), &mut rng).unwrap();
    let bytes = save_checkpoint(&model).len();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let config = PipelineConfig::default();
    let elapsed = pool.install(|| {
        let start = Instant::now();
        let pred = infer(&frame, &model, &config, None).unwrap();
        assert_eq!(pred.instance_map.len(), 256 * 256);
        start.elapsed()
    });
    verdict(
        9,
        "resource envelope",
        elapsed < Duration::from_secs(2) && bytes <= 5 * 1024 * 1024,
        format!(
            "256x256 preprocess + infer {:.3}s on one thread, checkpoint {bytes} bytes ({} parameters)",
            elapsed.as_secs_f64(),
            model.parameter_count()
        ),
    );
}

// ---------- 10. determinism of the whole chain ----------

fn run_chain(root: &Path) {
    let bin = env!("CARGO_BIN_EXE_supergbd");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let (data, model, pred) = (root.join("data"), root.join("model.sgbd"), root.join("pred"));
    let spx = root.join("spx");
    let steps: Vec<Vec<String>> = vec![
        vec!["synth".into(), "--out".into(), s(&data), "--train".into(), "12".into(), "--test".into(), "4".into(),
             "--width".into(), "96".into(), "--height".into(), "96".into(), "--seed".into(), "10".into()],
        vec!["preprocess".into(), "--data".into(), s(&data), "--out".into(), s(&spx), "--patches".into(), "64".into()],
        vec!["train".into(), "--data".into(), s(&data), "--spx".into(), s(&spx), "--out".into(), s(&model),
             "--epochs".into(), "2".into(), "--seed".into(), "10".into(), "--patches".into(), "64".into()],
        vec!["infer".into(), "--data".into(), s(&data), "--split".into(), "test".into(), "--spx".into(), s(&spx),
             "--checkpoint".into(), s(&model), "--out".into(), s(&pred), "--patches".into(), "64".into()],
        vec!["eval".into(), "--data".into(), s(&data), "--split".into(), "test".into(), "--pred".into(), s(&pred)],
    ];
    for args in steps {
        let out = Command::new(bin).args(&args).env("RUST_LOG", "warn").env_remove("SUPERGBD_SEED").output().unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

fn tree_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn c10_chain_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_chain(a.path());
    run_chain(b.path());
    let (ta, tb) = (tree_bytes(a.path()), tree_bytes(b.path()));
    let differing: Vec<&String> = ta.keys().filter(|k| ta.get(*k) != tb.get(*k)).collect();
    let same_files = ta.keys().eq(tb.keys());
    verdict(
        10,
        "chain determinism",
        same_files && differing.is_empty() && ta.len() > 20,
        format!("{} artifacts compared, differing {differing:?}", ta.len()),
    );
}
