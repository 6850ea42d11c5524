//! Two-stage training: the intention classifier first, then the trajectory
//! regressor on ground-truth target lanes.

use std::fmt::Write as _;
use std::time::Instant;

use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::KeyValues;
use crate::dataset::SampleSet;
use crate::error::{Error, Result};
use crate::features::FeatureWindow;
use crate::intention::{stack_windows, IntentionModel, INFERENCE_BATCH, NUM_CLASSES};
use crate::nn::{sgd_update, SeqModel, Target};
use crate::trajectory::{regression_target, TrajectoryModel};

#[derive(Debug, Clone, PartialEq)]
pub struct HyperConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_init: f64,
    pub lr_decay_factor: f64,
    /// Epochs without validation improvement before the learning rate decays.
    pub patience: usize,
    pub clip_norm: f64,
    pub seed: u64,
    pub class_reweight_cap: f64,
    pub forget_bias: f64,
}

impl Default for HyperConfig {
    fn default() -> Self {
        Self {
            batch_size: 100,
            epochs: 5,
            lr_init: 1.0,
            lr_decay_factor: 0.5,
            patience: 1,
            clip_norm: 5.0,
            seed: 0,
            class_reweight_cap: 10.0,
            forget_bias: 1.0,
        }
    }
}

impl HyperConfig {
    pub fn from_config(text: &str, source: &str) -> Result<Self> {
        let d = Self::default();
        let mut kv = KeyValues::parse(text, source)?;
        let h = Self {
            batch_size: kv.take("batch_size", d.batch_size)?,
            epochs: kv.take("epochs", d.epochs)?,
            lr_init: kv.take("lr_init", d.lr_init)?,
            lr_decay_factor: kv.take("lr_decay_factor", d.lr_decay_factor)?,
            patience: kv.take("patience", d.patience)?,
            clip_norm: kv.take("clip_norm", d.clip_norm)?,
            seed: kv.take("seed", d.seed)?,
            class_reweight_cap: kv.take("class_reweight_cap", d.class_reweight_cap)?,
            forget_bias: kv.take("forget_bias", d.forget_bias)?,
        };
        kv.finish()?;
        h.validate()?;
        Ok(h)
    }

    pub fn to_config(&self) -> String {
        format!(
            "batch_size={}\nepochs={}\nlr_init={}\nlr_decay_factor={}\npatience={}\nclip_norm={}\nseed={}\n\
             class_reweight_cap={}\nforget_bias={}\n",
            self.batch_size,
            self.epochs,
            self.lr_init,
            self.lr_decay_factor,
            self.patience,
            self.clip_norm,
            self.seed,
            self.class_reweight_cap,
            self.forget_bias
        )
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.batch_size > 0
            && self.lr_init >= 0.0
            && self.lr_init.is_finite()
            && self.lr_decay_factor > 0.0
            && self.lr_decay_factor <= 1.0
            && self.patience > 0
            && self.clip_norm > 0.0
            && self.class_reweight_cap >= 1.0
            && self.forget_bias.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid hyperparameters: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch (1-based) whose parameters were kept.
    pub best_epoch: Option<usize>,
    /// Set when a non-finite loss or gradient stopped training.
    pub diverged: Option<String>,
}

impl TrainHistory {
    /// Comma-separated table. Wall time is left out so that identical runs
    /// produce identical files.
    pub fn to_table(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,lr\n");
        for r in &self.epochs {
            let _ = writeln!(out, "{},{:.9e},{:.9e},{:e}", r.epoch, r.train_loss, r.val_loss, r.lr);
        }
        out
    }
}

enum Labels {
    Classes(Vec<usize>),
    Values(Vec<Vec<f64>>),
}

/// Windows of one stage plus the lane each is measured against and its label.
struct StageData<'a> {
    windows: Vec<&'a FeatureWindow>,
    lanes: Vec<usize>,
    labels: Labels,
}

impl StageData<'_> {
    fn len(&self) -> usize {
        self.windows.len()
    }

    fn batch(&self, idx: &[usize], reweight_cap: Option<f64>) -> (Array3<f64>, Vec<Target<'_>>) {
        let windows: Vec<&FeatureWindow> = idx.iter().map(|&i| self.windows[i]).collect();
        let xs = stack_windows(&windows, |b, _| self.lanes[idx[b]]);
        let targets = match &self.labels {
            Labels::Classes(c) => {
                let mut counts = [0usize; NUM_CLASSES];
                idx.iter().for_each(|&i| counts[c[i]] += 1);
                // The batch's most frequent class has weight 1.
                let majority = counts.iter().copied().max().unwrap_or(1) as f64;
                let weight = |k: usize| match reweight_cap {
                    Some(cap) => (majority / counts[k] as f64).min(cap),
                    None => 1.0,
                };
                idx.iter()
                    .map(|&i| Target::Class {
                        class: c[i],
                        weight: weight(c[i]),
                    })
                    .collect()
            }
            Labels::Values(v) => idx.iter().map(|&i| Target::Values(&v[i])).collect(),
        };
        (xs, targets)
    }

    fn mean_loss(&self, model: &SeqModel) -> Result<f64> {
        let all: Vec<usize> = (0..self.len()).collect();
        let mut total = 0.0;
        for chunk in all.chunks(INFERENCE_BATCH) {
            let (xs, targets) = self.batch(chunk, None);
            total += model.batch_loss(xs, &targets)? * chunk.len() as f64;
        }
        Ok(total / self.len() as f64)
    }
}

fn intention_data(set: &SampleSet) -> StageData<'_> {
    StageData {
        windows: set.windows.iter().collect(),
        lanes: set.windows.iter().map(|w| w.current_lane).collect(),
        labels: Labels::Classes(set.windows.iter().map(|w| w.intention.index()).collect()),
    }
}

fn trajectory_data(set: &SampleSet) -> Result<StageData<'_>> {
    let mut lanes = Vec::with_capacity(set.len());
    let mut values = Vec::with_capacity(set.len());
    for w in &set.windows {
        let t = w.targets.as_ref().ok_or_else(|| {
            Error::InvalidArgument(format!("window {}@{} has no trajectory targets", w.vehicle_id, w.anchor_frame))
        })?;
        lanes.push(t.target_lane);
        values.push(regression_target(&t.accel, &t.x_dev));
    }
    Ok(StageData {
        windows: set.windows.iter().collect(),
        lanes,
        labels: Labels::Values(values),
    })
}

fn init_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const INTENT_INIT_STREAM: u64 = 1;
const TRAJ_INIT_STREAM: u64 = 2;
const INTENT_SHUFFLE_STREAM: u64 = 3;
const TRAJ_SHUFFLE_STREAM: u64 = 4;

/// Initial parameters both stages start from for a given seed.
pub fn initial_models(hyper: &HyperConfig) -> (IntentionModel, TrajectoryModel) {
    (
        IntentionModel::init(hyper.forget_bias, &mut init_rng(hyper.seed, INTENT_INIT_STREAM)),
        TrajectoryModel::init(hyper.forget_bias, &mut init_rng(hyper.seed, TRAJ_INIT_STREAM)),
    )
}

/// SGD over reshuffled batches with step decay on validation plateaus.
/// Returns the parameters of the best validation epoch.
fn fit(
    mut model: SeqModel,
    train: &StageData<'_>,
    val: &StageData<'_>,
    hyper: &HyperConfig,
    shuffle_stream: u64,
    reweight: bool,
) -> Result<(SeqModel, TrainHistory)> {
    hyper.validate()?;
    if train.len() == 0 {
        return Err(Error::NoSamples);
    }
    let mut rng = init_rng(hyper.seed, shuffle_stream);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, SeqModel)> = None;
    let mut lr = hyper.lr_init;
    let mut stale = 0;
    let cap = reweight.then_some(hyper.class_reweight_cap);
    let mut order: Vec<usize> = (0..train.len()).collect();

    'epochs: for epoch in 1..=hyper.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut train_total = 0.0;
        for chunk in order.chunks(hyper.batch_size) {
            let (xs, targets) = train.batch(chunk, cap);
            let (loss, grads) = match model.batch_loss_and_grads(xs, &targets) {
                Ok(r) => r,
                Err(Error::NonFinite(what)) => {
                    history.diverged = Some(format!("epoch {epoch}: non-finite {what}"));
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            train_total += loss * chunk.len() as f64;
            if lr > 0.0 {
                sgd_update(&mut model, &grads, lr, hyper.clip_norm)?;
            }
        }
        let train_loss = train_total / train.len() as f64;
        let val_loss = if val.len() > 0 { val.mean_loss(&model)? } else { train_loss };
        if !val_loss.is_finite() {
            history.diverged = Some(format!("epoch {epoch}: non-finite validation loss"));
            break;
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
            wall_time_s: started.elapsed().as_secs_f64(),
        });
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, model.clone()));
            history.best_epoch = Some(epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= hyper.patience {
                lr *= hyper.lr_decay_factor;
                stale = 0;
            }
        }
    }
    Ok((best.map_or(model, |(_, m)| m), history))
}

/// Stage one: class-reweighted cross-entropy on the intention labels.
pub fn train_intention(train: &SampleSet, val: &SampleSet, hyper: &HyperConfig) -> Result<(IntentionModel, TrainHistory)> {
    let (init, _) = initial_models(hyper);
    train_intention_from(init, train, val, hyper)
}

pub fn train_intention_from(
    init: IntentionModel,
    train: &SampleSet,
    val: &SampleSet,
    hyper: &HyperConfig,
) -> Result<(IntentionModel, TrainHistory)> {
    let (model, history) = fit(init.0, &intention_data(train), &intention_data(val), hyper, INTENT_SHUFFLE_STREAM, true)?;
    Ok((IntentionModel(model), history))
}

/// Stage two: L2 loss on scaled accelerations and deviations, with features
/// measured against the labeled target lane.
pub fn train_trajectory(train: &SampleSet, val: &SampleSet, hyper: &HyperConfig) -> Result<(TrajectoryModel, TrainHistory)> {
    let (_, init) = initial_models(hyper);
    train_trajectory_from(init, train, val, hyper)
}

pub fn train_trajectory_from(
    init: TrajectoryModel,
    train: &SampleSet,
    val: &SampleSet,
    hyper: &HyperConfig,
) -> Result<(TrajectoryModel, TrainHistory)> {
    let (model, history) = fit(init.0, &trajectory_data(train)?, &trajectory_data(val)?, hyper, TRAJ_SHUFFLE_STREAM, false)?;
    Ok((TrajectoryModel(model), history))
}

/// Fraction of windows whose argmax class matches the label.
pub fn intention_accuracy(model: &IntentionModel, set: &SampleSet) -> Result<f64> {
    use crate::intention::{Intention, IntentionClassifier};
    if set.is_empty() {
        return Err(Error::NoSamples);
    }
    let refs: Vec<&FeatureWindow> = set.windows.iter().collect();
    let probs = model.probabilities(&refs)?;
    let hits = probs
        .iter()
        .zip(&set.windows)
        .filter(|(p, w)| Intention::argmax(p) == w.intention)
        .count();
    Ok(hits as f64 / set.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synth::{synth_generate, SynthConfig};
    use crate::dataset::{slice_windows, split_train_val, SliceConfig, Track};
    use crate::geometry::LaneGeometry;

    fn tiny_sets() -> (SampleSet, SampleSet) {
        let g = LaneGeometry::default();
        let cfg = SynthConfig {
            lane_keep_tracks: 4,
            left_change_tracks: 2,
            right_change_tracks: 2,
            duration_s: 25.0,
            ..SynthConfig::default()
        };
        let tracks: Vec<Track> = synth_generate(&cfg, &g, 3).unwrap().into_iter().map(|s| s.track).collect();
        let set = slice_windows(&tracks, &g, &SliceConfig::default());
        split_train_val(&set, 0.7, 3).unwrap()
    }

    fn quick() -> HyperConfig {
        HyperConfig {
            batch_size: 16,
            epochs: 2,
            ..HyperConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let (train, val) = tiny_sets();
        let hyper = HyperConfig { lr_init: 0.0, ..quick() };
        let (init_i, init_t) = initial_models(&hyper);
        let (m, h) = train_intention(&train, &val, &hyper).unwrap();
        assert_eq!(m, init_i);
        assert_eq!(h.epochs.len(), 2);
        assert_eq!(h.epochs[0].val_loss, h.epochs[1].val_loss);
        let (m, _) = train_trajectory(&train, &val, &hyper).unwrap();
        assert_eq!(m, init_t);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let (train, val) = tiny_sets();
        let hyper = HyperConfig { epochs: 0, ..quick() };
        let (m, h) = train_intention(&train, &val, &hyper).unwrap();
        assert_eq!(m, initial_models(&hyper).0);
        assert!(h.epochs.is_empty());
    }

    #[test]
    fn repeated_runs_are_identical() {
        let (train, val) = tiny_sets();
        let a = train_intention(&train, &val, &quick()).unwrap();
        let b = train_intention(&train, &val, &quick()).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.to_table(), b.1.to_table());
        let a = train_trajectory(&train, &val, &quick()).unwrap();
        let b = train_trajectory(&train, &val, &quick()).unwrap();
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn learning_rate_never_increases() {
        let (train, val) = tiny_sets();
        let hyper = HyperConfig { epochs: 4, ..quick() };
        let (_, h) = train_trajectory(&train, &val, &hyper).unwrap();
        assert!(h.epochs.windows(2).all(|w| w[1].lr <= w[0].lr));
    }

    #[test]
    fn small_steps_descend_on_a_frozen_batch() {
        let (train, _) = tiny_sets();
        let data = trajectory_data(&train).unwrap();
        let idx: Vec<usize> = (0..data.len().min(20)).collect();
        let (_, mut model) = initial_models(&HyperConfig::default());
        let mut last = f64::INFINITY;
        for _ in 0..10 {
            let (xs, targets) = data.batch(&idx, None);
            let (loss, grads) = model.0.batch_loss_and_grads(xs, &targets).unwrap();
            assert!(loss <= last, "{loss} > {last}");
            last = loss;
            sgd_update(&mut model.0, &grads, 1e-3, 5.0).unwrap();
        }
    }

    #[test]
    fn class_weights_are_inverse_frequency_capped() {
        let (train, _) = tiny_sets();
        let data = intention_data(&train);
        let idx: Vec<usize> = (0..data.len()).collect();
        let (_, targets) = data.batch(&idx, Some(10.0));
        let counts = train.class_counts();
        let majority = *counts.iter().max().unwrap() as f64;
        for t in targets {
            if let Target::Class { class, weight } = t {
                let expect = (majority / counts[class] as f64).min(10.0);
                assert_eq!(weight, expect);
            }
        }
    }

    #[test]
    fn hyper_config_parsing() {
        let h = HyperConfig::from_config("epochs=3\nseed=11\n", "hyper").unwrap();
        assert_eq!(h.epochs, 3);
        assert_eq!(h.seed, 11);
        assert_eq!(h.batch_size, 100);
        assert_eq!(HyperConfig::from_config(&h.to_config(), "hyper").unwrap(), h);
        assert!(HyperConfig::from_config("batch_size=0", "hyper").is_err());
    }
}
