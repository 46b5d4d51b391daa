use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use supergbd::imagery::{filter_dataset, load_frame, save_frame, DatasetIndex, RgbdFrame, DEFAULT_MAX_DEPTH_MM};

/// A 32x32 frame with one square object per entry of `sizes` (side lengths).
fn frame_with_objects(id: &str, sizes: &[usize], rng: &mut ChaCha8Rng) -> RgbdFrame {
    let (w, h) = (32, 32);
    let rgb = (0..w * h).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
    let depth = (0..w * h).map(|_| rng.random_range(0.05..0.5)).collect();
    let mut f = RgbdFrame::new(id, w, h, rgb, depth).unwrap();
    let mut gt = vec![0u32; w * h];
    let mut classes = BTreeMap::new();
    for (i, &side) in sizes.iter().enumerate() {
        let (x0, y0) = ((i % 4) * 8, (i / 4) * 8);
        for y in y0..y0 + side {
            for x in x0..x0 + side {
                gt[y * w + x] = i as u32 + 1;
            }
        }
        classes.insert(i as u32 + 1, format!("c{}", i % 3));
    }
    f.instance_gt = Some(gt);
    f.class_of_instance = Some(classes);
    f
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn filter_matches_a_direct_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut expected = Vec::new();
    for i in 0..20 {
        // objects of side 8 have 64 px, side 7 only 49
        let sizes: Vec<usize> = (0..rng.random_range(0..6)).map(|_| rng.random_range(6..=8)).collect();
        let id = format!("f{i:02}");
        if sizes.iter().filter(|&&s| s * s >= 50).count() >= 2 {
            expected.push(id.clone());
        }
        save_frame(&frame_with_objects(&id, &sizes, &mut rng), dir.path(), DEFAULT_MAX_DEPTH_MM).unwrap();
    }
    assert!(!expected.is_empty() && expected.len() < 20);
    let index = DatasetIndex::open(dir.path()).unwrap();
    let (kept, warnings) = filter_dataset(&index, 2, 50).unwrap();
    assert!(warnings.is_empty());
    assert_eq!(kept.ids().collect::<Vec<_>>(), expected);

    let (again, _) = filter_dataset(&kept, 2, 50).unwrap();
    assert_eq!(again, kept);
}

#[test]
fn save_load_save_is_byte_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let first = tempfile::tempdir().unwrap();
    let mut frame = frame_with_objects("a", &[8, 5, 7], &mut rng);
    frame.depth[3] = 0.0;
    frame.valid[3] = false;
    save_frame(&frame, first.path(), DEFAULT_MAX_DEPTH_MM).unwrap();

    let index = DatasetIndex::open(first.path()).unwrap();
    let loaded = load_frame(&index, "a").unwrap();
    assert!(!loaded.valid[3]);
    assert_eq!(loaded.instance_gt, frame.instance_gt);
    assert_eq!(loaded.class_of_instance, frame.class_of_instance);
    let second = tempfile::tempdir().unwrap();
    save_frame(&loaded, second.path(), DEFAULT_MAX_DEPTH_MM).unwrap();
    assert_eq!(dir_bytes(first.path()), dir_bytes(second.path()));
}

#[test]
fn frames_without_ground_truth_are_dropped_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut bare = frame_with_objects("bare", &[8, 8], &mut rng);
    bare.instance_gt = None;
    bare.class_of_instance = None;
    save_frame(&bare, dir.path(), DEFAULT_MAX_DEPTH_MM).unwrap();
    save_frame(&frame_with_objects("full", &[8, 8], &mut rng), dir.path(), DEFAULT_MAX_DEPTH_MM).unwrap();
    let (kept, warnings) = filter_dataset(&DatasetIndex::open(dir.path()).unwrap(), 2, 50).unwrap();
    assert_eq!(kept.ids().collect::<Vec<_>>(), ["full"]);
    assert_eq!(warnings.len(), 1);
    assert_eq!(warnings[0].frame_id, "bare");
}
