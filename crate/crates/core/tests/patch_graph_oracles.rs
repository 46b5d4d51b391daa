use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use supergbd::imagery::RgbdFrame;
use supergbd::patch_graph::{
    build_graph, compute_normals, depth_gradients, extract_features, label_edges_from_gt, majority_instances,
    FeatureSet, PairSampler, Sidecar, EXPLICIT_DIM,
};
use supergbd::superpixel::SuperpixelMap;

fn frame(w: usize, h: usize, depth: Vec<f32>) -> RgbdFrame {
    let rgb = (0..w * h).map(|p| [(p % 7) as f32 / 7.0, 0.5, 0.2]).collect();
    RgbdFrame::new("t", w, h, rgb, depth).unwrap()
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let (w, h) = (48usize, 40usize);
        let (a, b, c): (f64, f64, f64) = (rng.random_range(0.5..2.0), rng.random_range(0.5..2.0), rng.random());
        let f = |x: f64, y: f64| 0.4 + 0.05 * (a * x + c).sin() * (b * y).cos() + 0.02 * x * y;
        let depth: Vec<f32> = (0..w * h)
            .map(|p| f((p % w) as f64 / w as f64, (p / w) as f64 / h as f64) as f32)
            .collect();
        let grads = depth_gradients(&depth, &vec![true; w * h], w, h);
        let normals = compute_normals(&depth, &vec![true; w * h], w, h);
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let p = y * w + x;
                let d = |q: usize| depth[q] as f64;
                let gx = (d(p + 1) - d(p - 1)) / (2.0 / w as f64);
                let gy = (d(p + w) - d(p - w)) / (2.0 / h as f64);
                assert!((grads[p][0] - gx).abs() <= 1e-6 * gx.abs().max(1.0), "gx at ({x}, {y})");
                assert!((grads[p][1] - gy).abs() <= 1e-6 * gy.abs().max(1.0), "gy at ({x}, {y})");
                let n = normals[p];
                let norm = (gx * gx + gy * gy + 1.0).sqrt();
                assert!((n[0] as f64 + gx / norm).abs() < 1e-6);
                assert!((n[1] as f64 + gy / norm).abs() < 1e-6);
                assert!((n[2] as f64 - 1.0 / norm).abs() < 1e-6);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn normals_are_unit_length(
        depth in prop::collection::vec(0.0f32..1.0, 12 * 9),
        holes in prop::collection::vec(prop::bool::weighted(0.2), 12 * 9),
    ) {
        let depth: Vec<f32> = depth.iter().zip(&holes).map(|(&d, &h)| if h { 0.0 } else { d }).collect();
        let valid: Vec<bool> = holes.iter().map(|h| !h).collect();
        for n in compute_normals(&depth, &valid, 12, 9) {
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            prop_assert!((len - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn edges_are_exactly_the_adjacent_patch_pairs(keys in prop::collection::vec(0u8..5, 16 * 16)) {
        let (w, h) = (16, 16);
        let map = SuperpixelMap::from_keys(w, h, &keys).unwrap();
        let f = frame(w, h, vec![0.5; w * h]);
        let graph = build_graph(&map, extract_features(&f, &map, None).unwrap()).unwrap();
        let got: BTreeSet<(u32, u32)> = graph.edges.iter().map(|e| (e.a, e.b)).collect();
        prop_assert_eq!(got.len(), graph.edges.len());

        let l = map.labels();
        let mut want = BTreeSet::new();
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                for q in [(x + 1 < w).then(|| p + 1), (y + 1 < h).then(|| p + w)].into_iter().flatten() {
                    if l[p] != l[q] {
                        want.insert((l[p].min(l[q]), l[p].max(l[q])));
                    }
                }
            }
        }
        prop_assert_eq!(got, want);
    }

    #[test]
    fn majority_labels_follow_instance_renaming(
        keys in prop::collection::vec(0u8..4, 10 * 10),
        gt in prop::collection::vec(0u32..4, 10 * 10),
        perm in Just(vec![1u32, 2, 3]).prop_shuffle(),
    ) {
        let map = SuperpixelMap::from_keys(10, 10, &keys).unwrap();
        let rename = |id: u32| if id == 0 { 0 } else { perm[id as usize - 1] * 10 };
        let renamed: Vec<u32> = gt.iter().map(|&id| rename(id)).collect();
        let a = majority_instances(&map, &gt).unwrap();
        let b = majority_instances(&map, &renamed).unwrap();
        for (patch, pix) in map.pixels_by_patch().iter().enumerate() {
            let mut counts = [0usize; 4];
            pix.iter().for_each(|&p| counts[gt[p] as usize] += 1);
            let top = *counts.iter().max().unwrap();
            if counts.iter().filter(|&&c| c == top).count() == 1 {
                prop_assert_eq!(rename(a[patch]), b[patch]);
            }
        }
    }
}

#[test]
fn sixty_forty_patch_joins_its_majority() {
    // patch 0: columns 0-4 of a 10x1 strip (60% id 1, 40% id 2); patch 1: columns 5-9, pure id 1
    let labels = vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
    let gt = vec![1, 1, 1, 2, 2, 1, 1, 1, 1, 1];
    let map = SuperpixelMap::from_labels(10, 1, labels).unwrap();
    let f = frame(10, 1, vec![0.5; 10]);
    let graph = build_graph(&map, extract_features(&f, &map, None).unwrap()).unwrap();
    let graph = label_edges_from_gt(graph, &map, &gt).unwrap();
    assert_eq!(graph.edges.len(), 1);
    assert_eq!(graph.edges[0].gt, Some(true));
    assert_eq!(graph.gt_instance, Some(vec![1, 1]));
}

#[test]
fn feature_widths() {
    assert_eq!(EXPLICIT_DIM, 9);
    assert_eq!(FeatureSet::EXPLICIT.patch_dim(0), 9);
    let all: FeatureSet = "rgb,xyz,normals,implicit".parse().unwrap();
    assert_eq!(all.patch_dim(6), 15);
    assert_eq!(all.pair_dim(6), 30);

    let labels = vec![0, 0, 1, 1];
    let map = SuperpixelMap::from_labels(4, 1, labels).unwrap();
    let sidecar = Sidecar::from_rows(vec![(0, vec![0.1; 6]), (1, vec![0.2; 6])]).unwrap();
    let f = frame(4, 1, vec![0.5; 4]);
    let graph = build_graph(&map, extract_features(&f, &map, Some(&sidecar)).unwrap()).unwrap();
    let mut row = Vec::new();
    graph.pair_features(0, 1, all, &mut row);
    assert_eq!(row.len(), 30);
}

/// A labeled chain graph whose patches carry their id (in thousandths) as red, so every
/// sample can be traced back to its edge.
fn traceable_graph(n: usize, rng: &mut ChaCha8Rng) -> supergbd::patch_graph::PatchGraph {
    let w = n;
    let labels: Vec<u32> = (0..w as u32).collect();
    let map = SuperpixelMap::from_labels(w, 1, labels).unwrap();
    let rgb = (0..w).map(|p| [p as f32 / 1000.0, 0.0, 0.0]).collect();
    let f = RgbdFrame::new("t", w, 1, rgb, vec![0.5; w]).unwrap();
    let gt: Vec<u32> = (0..w).map(|_| rng.random_range(1..3)).collect();
    let graph = build_graph(&map, extract_features(&f, &map, None).unwrap()).unwrap();
    label_edges_from_gt(graph, &map, &gt).unwrap()
}

#[test]
fn sampler_hits_target_ratios() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let graph = traceable_graph(200, &mut rng);
    let sampler = PairSampler::new([&graph], FeatureSet::EXPLICIT).unwrap();
    for target in [0.5, 0.25, 0.1] {
        let samples = sampler.sample(10_000, target, &mut rng).unwrap();
        let pos = samples.iter().filter(|s| s.label).count() as f64 / samples.len() as f64;
        assert!((pos - target).abs() <= 0.02, "target {target}: {pos}");
    }
}

#[test]
fn swapped_samples_keep_their_edge_label() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let graph = traceable_graph(60, &mut rng);
    let sampler = PairSampler::new([&graph], FeatureSet::EXPLICIT).unwrap();
    let samples = sampler.sample(2000, 0.3, &mut rng).unwrap();
    let swaps = samples.iter().filter(|s| s.swapped).count();
    assert!((800..1200).contains(&swaps), "{swaps} swaps");
    for s in samples {
        let id = |v: f32| (v * 1000.0).round() as u32;
        let (first, second) = (id(s.features[0]), id(s.features[EXPLICIT_DIM]));
        assert_eq!(s.swapped, first > second);
        let (a, b) = (first.min(second), first.max(second));
        let edge = graph.edges.iter().find(|e| e.a == a && e.b == b).expect("sample from a real edge");
        assert_eq!(edge.gt, Some(s.label));
    }
}
