//! Zero-shot class splits: stratified halving of class groups and tagging
//! of dataset frames by whether they contain unseen classes.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagery::{read_json, write_json, DatasetIndex, Manifest};
use crate::metrics::ClassSplit;

pub const TRAIN_ELIGIBLE: &str = "train-eligible";
pub const TEST_ONLY: &str = "test-only";

/// Group name to the classes in that group.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassGrouping {
    pub groups: BTreeMap<String, Vec<String>>,
}

impl ClassGrouping {
    pub fn validate(&self) -> Result<()> {
        let mut all = BTreeSet::new();
        for (group, classes) in &self.groups {
            if classes.is_empty() {
                return Err(Error::Split(format!("group `{group}` is empty")));
            }
            for c in classes {
                if !all.insert(c.as_str()) {
                    return Err(Error::Split(format!("class `{c}` appears more than once")));
                }
            }
        }
        Ok(())
    }

    pub fn classes(&self) -> BTreeSet<&str> {
        self.groups.values().flatten().map(String::as_str).collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroShotSplit {
    pub seen: Vec<String>,
    pub unseen: Vec<String>,
    pub seed: u64,
}

impl ZeroShotSplit {
    pub fn class_split(&self) -> Result<ClassSplit> {
        ClassSplit::new(self.seen.iter().cloned(), self.unseen.iter().cloned())
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

/// Send ⌊n/2⌋ uniformly chosen classes of every group to seen and the rest
/// to unseen. Groups are visited in name order, so the result depends only
/// on the grouping and `seed`.
pub fn stratified_split(grouping: &ClassGrouping, seed: u64) -> Result<ZeroShotSplit> {
    grouping.validate()?;
    if grouping.groups.is_empty() {
        return Err(Error::Split("no class groups".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut seen, mut unseen) = (Vec::new(), Vec::new());
    for (group, classes) in &grouping.groups {
        if classes.len() < 2 {
            return Err(Error::Split(format!(
                "group `{group}` has {} class; at least 2 are needed",
                classes.len()
            )));
        }
        let mut shuffled = classes.clone();
        shuffled.shuffle(&mut rng);
        let half = shuffled.len() / 2;
        seen.extend_from_slice(&shuffled[..half]);
        unseen.extend_from_slice(&shuffled[half..]);
    }
    seen.sort();
    unseen.sort();
    Ok(ZeroShotSplit { seen, unseen, seed })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagCounts {
    pub train_eligible: usize,
    pub test_only: usize,
}

/// Tag every frame of `index`: train-eligible when all of its objects are of
/// seen classes, test-only otherwise. Returns the updated manifest (with the
/// split embedded) and the tag counts; nothing is written.
pub fn tag_dataset(index: &DatasetIndex, split: &ZeroShotSplit) -> Result<(Manifest, TagCounts)> {
    let classes = split.class_split()?;
    let mut manifest = index.manifest.clone();
    let mut counts = TagCounts::default();
    for entry in &mut manifest.frames {
        let files = index.files(&entry.id)?;
        let path = files.class.as_ref().ok_or_else(|| {
            Error::Split(format!("frame `{}` has no class annotation", entry.id))
        })?;
        let frame_classes: BTreeMap<String, String> = read_json(path)?;
        let mut has_unseen = false;
        for class in frame_classes.values() {
            if classes.unseen.contains(class) {
                has_unseen = true;
            } else if !classes.seen.contains(class) {
                return Err(Error::UnknownClass(class.clone()));
            }
        }
        let tag = if has_unseen {
            counts.test_only += 1;
            TEST_ONLY
        } else {
            counts.train_eligible += 1;
            TRAIN_ELIGIBLE
        };
        entry.zero_shot = Some(tag.to_string());
    }
    manifest.seen_classes = split.seen.clone();
    manifest.unseen_classes = split.unseen.clone();
    manifest.split_seed = Some(split.seed);
    Ok((manifest, counts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grouping(groups: &[(&str, &[&str])]) -> ClassGrouping {
        ClassGrouping {
            groups: groups
                .iter()
                .map(|(g, cs)| (g.to_string(), cs.iter().map(|c| c.to_string()).collect()))
                .collect(),
        }
    }

    #[test]
    fn one_seen_class_per_pair() {
        let g = grouping(&[("A", &["a1", "a2"]), ("B", &["b1", "b2"])]);
        let s = stratified_split(&g, 3).unwrap();
        assert_eq!(s.seen.len(), 2);
        assert_eq!(s.seen.iter().filter(|c| c.starts_with('a')).count(), 1);
        assert_eq!(s.seen.iter().filter(|c| c.starts_with('b')).count(), 1);
    }

    #[test]
    fn odd_groups_favor_unseen() {
        let g = grouping(&[("A", &["a", "b", "c"]), ("B", &["d", "e"])]);
        let s = stratified_split(&g, 0).unwrap();
        assert_eq!((s.seen.len(), s.unseen.len()), (2, 3));
    }

    #[test]
    fn bad_groupings_are_rejected() {
        assert!(stratified_split(&grouping(&[("A", &["a"])]), 0).is_err());
        assert!(stratified_split(&grouping(&[("A", &[])]), 0).is_err());
        assert!(stratified_split(&grouping(&[("A", &["a", "b"]), ("B", &["a", "c"])]), 0).is_err());
    }

    #[test]
    fn grouping_json_is_a_plain_map() {
        let g: ClassGrouping = serde_json::from_str(r#"{"cubics": ["box", "wedge"]}"#).unwrap();
        assert_eq!(g.groups["cubics"], vec!["box", "wedge"]);
    }
}
