//! Driver-intention stage: labels, the 64-cell classifier, and recognition
//! timing around lane-change events.

use ndarray::{Array3, Axis};
use rand::Rng;

use crate::dataset::{Direction, LaneChangeEvent, Track};
use crate::error::{Error, Result};
use crate::features::{build_feature_window, FeatureWindow, DT, FEATURE_DIM, WINDOW_STEPS};
use crate::geometry::LaneGeometry;
use crate::nn::{softmax, SeqModel};

pub const INTENTION_HIDDEN: usize = 64;
pub const NUM_CLASSES: usize = 3;
/// Frames before a crossing that are labeled as a lane change (4 s).
pub const LABEL_FRAMES: usize = 40;
/// Class probability needed to count as recognized.
pub const RECOGNITION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Intention {
    LaneKeep = 0,
    LeftChange = 1,
    RightChange = 2,
}

impl Intention {
    pub const ALL: [Intention; 3] = [Intention::LaneKeep, Intention::LeftChange, Intention::RightChange];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(idx: usize) -> Option<Self> {
        Self::ALL.get(idx).copied()
    }

    pub fn code(self) -> &'static str {
        match self {
            Intention::LaneKeep => "LK",
            Intention::LeftChange => "LLC",
            Intention::RightChange => "RLC",
        }
    }

    /// Argmax of a probability vector; ties resolve to the lowest index, so a
    /// uniform vector means lane keeping.
    pub fn argmax(probs: &[f64; NUM_CLASSES]) -> Self {
        let mut best = 0;
        for k in 1..NUM_CLASSES {
            if probs[k] > probs[best] {
                best = k;
            }
        }
        Self::ALL[best]
    }
}

impl From<Direction> for Intention {
    fn from(d: Direction) -> Self {
        match d {
            Direction::Left => Intention::LeftChange,
            Direction::Right => Intention::RightChange,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntentionLabel {
    pub class: Intention,
    pub one_hot: [f64; NUM_CLASSES],
}

impl From<Intention> for IntentionLabel {
    fn from(class: Intention) -> Self {
        let mut one_hot = [0.0; NUM_CLASSES];
        one_hot[class.index()] = 1.0;
        Self { class, one_hot }
    }
}

/// The event whose labeling interval `[t_cross − 4 s, t_cross)` contains
/// `anchor`; the nearest crossing wins when intervals overlap.
pub fn labeling_event(events: &[LaneChangeEvent], anchor: usize) -> Option<&LaneChangeEvent> {
    events
        .iter()
        .filter(|e| anchor < e.cross_index && e.cross_index - anchor <= LABEL_FRAMES)
        .min_by_key(|e| e.cross_index - anchor)
}

pub fn label_intention(events: &[LaneChangeEvent], anchor: usize) -> IntentionLabel {
    labeling_event(events, anchor)
        .map(|e| Intention::from(e.direction))
        .unwrap_or(Intention::LaneKeep)
        .into()
}

/// Labeled window at `anchor`: intention from `events` and the ground-truth
/// target lane (the event's destination for lane changes).
pub fn labeled_window(
    track: &Track,
    geom: &LaneGeometry,
    events: &[LaneChangeEvent],
    anchor: usize,
    with_targets: bool,
) -> Result<FeatureWindow> {
    match labeling_event(events, anchor) {
        Some(e) => build_feature_window(track, geom, anchor, e.direction.into(), e.to_lane, with_targets),
        None => {
            let lane = geom.lane_of(track.frames.get(anchor).map_or(0.0, |f| f.local_x));
            build_feature_window(track, geom, anchor, Intention::LaneKeep, lane, with_targets)
        }
    }
}

/// Anything that turns windows into intention probabilities.
pub trait IntentionClassifier {
    fn probabilities(&self, windows: &[&FeatureWindow]) -> Result<Vec<[f64; NUM_CLASSES]>>;
}

/// First network: one LSTM layer followed by a 3-way softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentionModel(pub SeqModel);

impl IntentionModel {
    pub fn zeros() -> Self {
        Self(SeqModel::zeros(FEATURE_DIM, INTENTION_HIDDEN, NUM_CLASSES))
    }

    pub fn init<R: Rng>(forget_bias: f64, rng: &mut R) -> Self {
        Self(SeqModel::init(FEATURE_DIM, INTENTION_HIDDEN, NUM_CLASSES, forget_bias, rng))
    }

    pub fn validate(&self) -> Result<()> {
        self.0.validate()?;
        if self.0.input_dim() != FEATURE_DIM || self.0.out_dim() != NUM_CLASSES {
            return Err(Error::dim("intention head", NUM_CLASSES, self.0.out_dim()));
        }
        Ok(())
    }
}

/// Stacks windows into the `T × B × I` layout, each measured against the
/// lane chosen by `lane_of`.
pub(crate) fn stack_windows(windows: &[&FeatureWindow], lane_of: impl Fn(usize, &FeatureWindow) -> usize) -> Array3<f64> {
    let mut xs = Array3::zeros((WINDOW_STEPS, windows.len(), FEATURE_DIM));
    for (b, w) in windows.iter().enumerate() {
        let lane = lane_of(b, w);
        if lane == w.current_lane {
            xs.index_axis_mut(Axis(1), b).assign(&w.features);
        } else {
            xs.index_axis_mut(Axis(1), b).assign(&w.features_for_lane(lane));
        }
    }
    xs
}

/// Largest batch pushed through the network at once during inference.
pub(crate) const INFERENCE_BATCH: usize = 256;

impl IntentionClassifier for IntentionModel {
    fn probabilities(&self, windows: &[&FeatureWindow]) -> Result<Vec<[f64; NUM_CLASSES]>> {
        let mut out = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(INFERENCE_BATCH) {
            let logits = self.0.forward_batch(stack_windows(chunk, |_, w| w.current_lane))?;
            for row in logits.rows() {
                let p = softmax(row.as_slice().expect("standard layout"))?;
                out.push([p[0], p[1], p[2]]);
            }
        }
        Ok(out)
    }
}

/// Probability vector for one window, from its final hidden state.
pub fn classify(model: &impl IntentionClassifier, window: &FeatureWindow) -> Result<[f64; NUM_CLASSES]> {
    Ok(model.probabilities(&[window])?[0])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LeadTime {
    /// Seconds between recognition and the crossing.
    Recognized(f64),
    Missed,
}

/// Scans every frame of the event's labeling interval up to the last frame
/// before the crossing. Recognition happens at the earliest frame whose
/// class probability exceeds 0.5 and from which the class stays the argmax
/// until the crossing.
pub fn recognition_lead_time(
    model: &impl IntentionClassifier,
    track: &Track,
    geom: &LaneGeometry,
    events: &[LaneChangeEvent],
    event: &LaneChangeEvent,
) -> Result<LeadTime> {
    let class = Intention::from(event.direction);
    let last = event.cross_index.checked_sub(1);
    let first = event.cross_index.saturating_sub(LABEL_FRAMES).max(WINDOW_STEPS - 1);
    let Some(last) = last.filter(|&l| l >= first) else {
        return Ok(LeadTime::Missed);
    };
    let windows = (first..=last)
        .map(|a| labeled_window(track, geom, events, a, false))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&FeatureWindow> = windows.iter().collect();
    let probs = model.probabilities(&refs)?;

    let mut earliest = None;
    for (offset, p) in probs.iter().enumerate().rev() {
        if Intention::argmax(p) != class {
            break;
        }
        if p[class.index()] > RECOGNITION_THRESHOLD {
            earliest = Some(first + offset);
        }
    }
    Ok(match earliest {
        Some(a) => LeadTime::Recognized((event.cross_index - a) as f64 * DT),
        None => LeadTime::Missed,
    })
}
