use rand::Rng;

use super::features::FeatureSet;
use super::graph::PatchGraph;
use crate::error::{Error, Result};

/// One training pair: two concatenated patch feature blocks and the merge label.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeSample {
    pub features: Vec<f32>,
    pub label: bool,
    /// The blocks appear as `(b, a)` instead of `(a, b)`.
    pub swapped: bool,
}

/// Positive and negative edge pools of a labeled corpus, stored as flat rows
/// of un-swapped pair features.
#[derive(Clone, Debug)]
pub struct PairSampler {
    set: FeatureSet,
    pair_dim: usize,
    positives: Vec<f32>,
    negatives: Vec<f32>,
}

impl PairSampler {
    pub fn new<'a>(graphs: impl IntoIterator<Item = &'a PatchGraph>, set: FeatureSet) -> Result<Self> {
        if set.is_empty() {
            return Err(Error::Config("feature set is empty".into()));
        }
        let mut m = None;
        let mut positives = Vec::new();
        let mut negatives = Vec::new();
        for g in graphs {
            if set.implicit {
                let gm = g.implicit_dim();
                if gm == 0 {
                    return Err(Error::Sidecar("implicit features requested but a frame has none".into()));
                }
                if *m.get_or_insert(gm) != gm {
                    return Err(Error::Sidecar(format!(
                        "implicit width {gm} differs from {} seen earlier",
                        m.unwrap()
                    )));
                }
            }
            for e in &g.edges {
                let label = e
                    .gt
                    .ok_or_else(|| Error::Training("corpus contains unlabeled edges".into()))?;
                let pool = if label { &mut positives } else { &mut negatives };
                g.pair_features(e.a, e.b, set, pool);
            }
        }
        Ok(PairSampler {
            set,
            pair_dim: set.pair_dim(m.unwrap_or(0)),
            positives,
            negatives,
        })
    }

    pub fn feature_set(&self) -> FeatureSet {
        self.set
    }

    /// Length of one sample's feature vector.
    pub fn pair_dim(&self) -> usize {
        self.pair_dim
    }

    /// `(positives, negatives)` edge counts.
    pub fn pool_sizes(&self) -> (usize, usize) {
        (self.positives.len() / self.pair_dim, self.negatives.len() / self.pair_dim)
    }

    pub fn edge_count(&self) -> usize {
        let (p, n) = self.pool_sizes();
        p + n
    }

    /// Positive fraction of the corpus before rebalancing.
    pub fn natural_positive_fraction(&self) -> f64 {
        let (p, n) = self.pool_sizes();
        if p + n == 0 {
            0.0
        } else {
            p as f64 / (p + n) as f64
        }
    }

    fn check(&self, batch_size: usize, target: f64) -> Result<usize> {
        if !(target > 0.0 && target < 1.0) {
            return Err(Error::Config(format!("positive fraction {target} outside (0, 1)")));
        }
        if batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        let (p, n) = self.pool_sizes();
        if p == 0 || n == 0 {
            return Err(Error::EmptyPool(format!("{p} positive and {n} negative edges")));
        }
        Ok((batch_size as f64 * target).floor() as usize)
    }

    /// Draw one batch into flat row-major `x` (`batch_size × pair_dim`) and
    /// labels `y` (1.0 / 0.0): `⌊batch·target⌋` positives first, then
    /// negatives, each drawn with replacement and swapped with probability 0.5.
    pub fn fill_batch<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        target: f64,
        rng: &mut R,
        x: &mut Vec<f32>,
        y: &mut Vec<f32>,
    ) -> Result<()> {
        let n_pos = self.check(batch_size, target)?;
        x.clear();
        y.clear();
        let d = self.pair_dim;
        let half = d / 2;
        for i in 0..batch_size {
            let (pool, label) = if i < n_pos {
                (&self.positives, 1.0)
            } else {
                (&self.negatives, 0.0)
            };
            let k = rng.random_range(0..pool.len() / d);
            let row = &pool[k * d..(k + 1) * d];
            if rng.random_bool(0.5) {
                x.extend_from_slice(&row[half..]);
                x.extend_from_slice(&row[..half]);
            } else {
                x.extend_from_slice(row);
            }
            y.push(label);
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        target: f64,
        rng: &mut R,
    ) -> Result<Vec<EdgeSample>> {
        let n_pos = self.check(batch_size, target)?;
        let d = self.pair_dim;
        let half = d / 2;
        Ok((0..batch_size)
            .map(|i| {
                let (pool, label) = if i < n_pos {
                    (&self.positives, true)
                } else {
                    (&self.negatives, false)
                };
                let k = rng.random_range(0..pool.len() / d);
                let row = &pool[k * d..(k + 1) * d];
                let swapped = rng.random_bool(0.5);
                let features = if swapped {
                    [&row[half..], &row[..half]].concat()
                } else {
                    row.to_vec()
                };
                EdgeSample {
                    features,
                    label,
                    swapped,
                }
            })
            .collect())
    }
}

/// One rebalanced batch drawn from the labeled edges of `graphs`.
pub fn sample_pairs<R: Rng + ?Sized>(
    graphs: &[PatchGraph],
    set: FeatureSet,
    target_positive_fraction: f64,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<EdgeSample>> {
    PairSampler::new(graphs, set)?.sample(batch_size, target_positive_fraction, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patch_graph::{Edge, PatchFeatures};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn graph(n_pos: usize, n_neg: usize) -> PatchGraph {
        let n = n_pos + n_neg + 1;
        let features = (0..n)
            .map(|i| PatchFeatures {
                rgb_mean: [i as f32; 3],
                centroid_xy: [0.0; 2],
                z: 0.0,
                normal: [0.0, 0.0, 1.0],
                implicit: None,
                depth_missing: false,
            })
            .collect();
        let edges = (0..n - 1)
            .map(|i| Edge {
                a: i as u32,
                b: i as u32 + 1,
                gt: Some(i < n_pos),
                prob: None,
            })
            .collect();
        PatchGraph {
            features,
            edges,
            gt_instance: None,
        }
    }

    #[test]
    fn batch_composition_follows_target() {
        let g = graph(800, 200);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = sample_pairs(&[g], FeatureSet::EXPLICIT, 0.25, 400, &mut rng).unwrap();
        assert_eq!(batch.len(), 400);
        assert_eq!(batch.iter().filter(|s| s.label).count(), 100);
    }

    #[test]
    fn swapped_samples_exchange_blocks() {
        let g = graph(5, 5);
        let set = FeatureSet {
            rgb: true,
            xyz: false,
            normals: false,
            implicit: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch = sample_pairs(&[g], set, 0.5, 200, &mut rng).unwrap();
        for s in &batch {
            let (first, second) = (s.features[0], s.features[3]);
            assert_eq!(s.swapped, first > second);
            assert_eq!((first - second).abs(), 1.0);
            // positives are edges (i, i+1) with i < 5
            assert_eq!(s.label, first.min(second) < 5.0);
        }
        let swapped = batch.iter().filter(|s| s.swapped).count();
        assert!((70..130).contains(&swapped), "{swapped}");
    }

    #[test]
    fn empty_pool_is_an_error() {
        let g = graph(10, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = sample_pairs(&[g], FeatureSet::EXPLICIT, 0.25, 8, &mut rng).unwrap_err();
        assert!(matches!(err, Error::EmptyPool(_)));
    }

    #[test]
    fn natural_fraction() {
        let s = PairSampler::new(&[graph(30, 10)], FeatureSet::EXPLICIT).unwrap();
        assert_eq!(s.pool_sizes(), (30, 10));
        assert_eq!(s.natural_positive_fraction(), 0.75);
        assert_eq!(s.pair_dim(), 18);
    }

    #[test]
    fn implicit_without_sidecar_is_rejected() {
        let set = FeatureSet {
            implicit: true,
            ..FeatureSet::EXPLICIT
        };
        assert!(PairSampler::new(&[graph(3, 3)], set).is_err());
    }
}
