use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{backward_and_step, MlpModel, DEFAULT_DROPOUT, DEFAULT_HIDDEN};
use super::optim::{step_lr, Adam};
use crate::error::{Error, Result};
use crate::metrics::{aggregate, evaluate_image, Aggregation, ImageEval};
use crate::patch_graph::{FeatureSet, PairSampler};
use crate::pipeline::{predict_instances, PipelineConfig, PreparedFrame};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Epochs between learning-rate decays.
    pub lr_step: usize,
    pub lr_decay: f64,
    pub batch_size: usize,
    /// Share of positive edges in every batch.
    pub positive_fraction: f64,
    pub seed: u64,
    pub features: FeatureSet,
    pub hidden: Vec<usize>,
    pub dropout: f32,
    /// Share of frames held out to select the best epoch.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            learning_rate: 1e-3,
            lr_step: 3,
            lr_decay: 0.5,
            batch_size: 256,
            positive_fraction: 0.25,
            seed: 0,
            features: FeatureSet::EXPLICIT,
            hidden: DEFAULT_HIDDEN.to_vec(),
            dropout: DEFAULT_DROPOUT,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(format!("lr decay {} outside (0, 1]", self.lr_decay));
        }
        if self.lr_step == 0 {
            return bad("lr step must be >= 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning rate {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1".into());
        }
        if !(self.positive_fraction > 0.0 && self.positive_fraction < 1.0) {
            return bad(format!("positive fraction {} outside (0, 1)", self.positive_fraction));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad(format!("validation fraction {} outside [0, 1)", self.validation_fraction));
        }
        if self.features.is_empty() {
            return bad("feature set is empty".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// One-based epoch number.
    pub epoch: usize,
    pub steps: usize,
    pub mean_loss: f64,
    pub learning_rate: f64,
    /// Overlap F (percent) on the validation frames.
    pub val_f: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation F.
    pub model: MlpModel,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
    pub natural_positive_fraction: f64,
    pub train_frames: Vec<String>,
    pub validation_frames: Vec<String>,
    pub implicit_dim: usize,
}

/// Overlap F over `frames` when segmenting with `model`.
fn validation_f(frames: &[&PreparedFrame], model: &MlpModel, config: &PipelineConfig) -> Result<f64> {
    let evals = frames
        .par_iter()
        .map(|f| {
            let gt = f.instance_gt.as_ref().ok_or_else(|| {
                Error::Training(format!("validation frame `{}` has no ground truth", f.frame_id))
            })?;
            let pred = predict_instances(f, model, config)?;
            evaluate_image(&f.frame_id, &pred.instance_map, gt, f.width(), f.height(), None, None, 1)
        })
        .collect::<Result<Vec<ImageEval>>>()?;
    Ok(aggregate(&evals, Aggregation::Pooled).all.overlap.f)
}

/// Train a merger on labeled frames. A seeded `validation_fraction` of the
/// frames (at least one when there are two or more) is held out; after every
/// epoch the model segments them through the pipeline under `validation`
/// and the epoch with the highest overlap F is returned.
pub fn train(
    frames: &[PreparedFrame],
    config: &TrainConfig,
    validation: &PipelineConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if frames.is_empty() {
        return Err(Error::Training("no training frames".into()));
    }
    let mut val_config = validation.clone();
    val_config.features = config.features;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..frames.len()).collect();
    order.shuffle(&mut rng);
    let n_val = if frames.len() < 2 || config.validation_fraction == 0.0 {
        0
    } else {
        ((frames.len() as f64 * config.validation_fraction).round() as usize).clamp(1, frames.len() - 1)
    };
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut val_idx = val_idx.to_vec();
    let mut train_idx = train_idx.to_vec();
    val_idx.sort_unstable();
    train_idx.sort_unstable();
    let train_frames: Vec<&PreparedFrame> = train_idx.iter().map(|&i| &frames[i]).collect();
    // Without a held-out set the training frames double as validation.
    let val_frames: Vec<&PreparedFrame> = if val_idx.is_empty() {
        train_frames.clone()
    } else {
        val_idx.iter().map(|&i| &frames[i]).collect()
    };

    let sampler = PairSampler::new(train_frames.iter().map(|f| &f.graph), config.features)?;
    let (n_pos, n_neg) = sampler.pool_sizes();
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::EmptyPool(format!(
            "training corpus has {n_pos} positive and {n_neg} negative edges"
        )));
    }
    let implicit_dim = if config.features.implicit {
        train_frames[0].graph.implicit_dim()
    } else {
        0
    };
    let mut dims = vec![sampler.pair_dim()];
    dims.extend(&config.hidden);
    dims.push(1);
    let mut model = MlpModel::new(&dims, config.dropout, &mut rng)?;
    let mut adam = Adam::new(&model);
    let steps = sampler.edge_count().div_ceil(config.batch_size).max(1);

    let mut best: Option<(f64, usize, MlpModel)> = None;
    let mut log = Vec::with_capacity(config.epochs);
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for epoch in 0..config.epochs {
        let lr = step_lr(config.learning_rate, config.lr_step, config.lr_decay, epoch);
        let mut total = 0.0;
        for _ in 0..steps {
            sampler.fill_batch(config.batch_size, config.positive_fraction, &mut rng, &mut x, &mut y)?;
            let loss = backward_and_step(&mut model, &x, &y, config.batch_size, &mut adam, lr as f32, &mut rng)
                .map_err(|e| Error::Training(format!("epoch {}: {e}", epoch + 1)))?;
            total += loss as f64;
        }
        let val_f = validation_f(&val_frames, &model, &val_config)?;
        let entry = EpochLog {
            epoch: epoch + 1,
            steps,
            mean_loss: total / steps as f64,
            learning_rate: lr,
            val_f,
        };
        log::info!(
            "epoch {:>2}: loss {:.4}, lr {:.2e}, val F {:.2}",
            entry.epoch,
            entry.mean_loss,
            lr,
            val_f
        );
        if !entry.mean_loss.is_finite() {
            return Err(Error::Training(format!("loss diverged in epoch {}", epoch + 1)));
        }
        if best.as_ref().is_none_or(|b| val_f > b.0) {
            best = Some((val_f, epoch + 1, model.clone()));
        }
        log.push(entry);
    }
    let (_, best_epoch, model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        model,
        best_epoch,
        log,
        natural_positive_fraction: sampler.natural_positive_fraction(),
        train_frames: train_frames.iter().map(|f| f.frame_id.clone()).collect(),
        validation_frames: val_idx.iter().map(|&i| frames[i].frame_id.clone()).collect(),
        implicit_dim,
    })
}
