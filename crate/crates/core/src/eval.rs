//! Held-out metrics: multi-horizon RMSE and intention lead times.

use std::fmt::Write as _;

use crate::dataset::{detect_lane_changes, Direction, SampleSet, Track};
use crate::error::{Error, Result};
use crate::features::{FeatureWindow, DT, HORIZON_STEPS};
use crate::geometry::LaneGeometry;
use crate::intention::{recognition_lead_time, IntentionClassifier, LeadTime, INFERENCE_BATCH};
use crate::trajectory::{predict_batch, PredictionOutput, TrajectoryModel};

/// Horizons reported, in prediction steps (1 s to 5 s).
pub const HORIZONS: [usize; 5] = [10, 20, 30, 40, 50];

#[derive(Debug, Clone, PartialEq)]
pub struct RmseTable {
    pub longitudinal: [f64; 5],
    pub lateral: [f64; 5],
    pub sample_count: usize,
}

impl RmseTable {
    pub fn to_table(&self) -> String {
        let mut out = String::from("horizon_s,longitudinal_rmse_m,lateral_rmse_m\n");
        for (k, h) in HORIZONS.iter().enumerate() {
            let _ = writeln!(
                out,
                "{:.1},{:.6},{:.6}",
                *h as f64 * DT,
                self.longitudinal[k],
                self.lateral[k]
            );
        }
        out
    }
}

/// Predicted and true future positions of one sample.
pub trait Forecast {
    fn x_hat(&self) -> &[f64];
    fn y_hat(&self) -> &[f64];
}

impl Forecast for PredictionOutput {
    fn x_hat(&self) -> &[f64] {
        &self.x_hat
    }
    fn y_hat(&self) -> &[f64] {
        &self.y_hat
    }
}

/// Plain position forecast, used for baselines and oracles.
#[derive(Debug, Clone, PartialEq)]
pub struct Positions {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Forecast for Positions {
    fn x_hat(&self) -> &[f64] {
        &self.x
    }
    fn y_hat(&self) -> &[f64] {
        &self.y
    }
}

/// RMSE of each forecast against its window's ground truth.
pub fn rmse_from_forecasts<F: Forecast>(windows: &[&FeatureWindow], forecasts: &[F]) -> Result<RmseTable> {
    if windows.is_empty() {
        return Err(Error::NoSamples);
    }
    if windows.len() != forecasts.len() {
        return Err(Error::dim("forecasts", windows.len(), forecasts.len()));
    }
    let mut lon = [0.0; 5];
    let mut lat = [0.0; 5];
    for (w, f) in windows.iter().zip(forecasts) {
        let t = w
            .targets
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("window {}@{} has no targets", w.vehicle_id, w.anchor_frame)))?;
        if f.x_hat().len() < HORIZON_STEPS || f.y_hat().len() < HORIZON_STEPS {
            return Err(Error::dim("forecast horizon", HORIZON_STEPS, f.x_hat().len().min(f.y_hat().len())));
        }
        for (k, &h) in HORIZONS.iter().enumerate() {
            lon[k] += (f.y_hat()[h - 1] - t.y[h - 1]).powi(2);
            lat[k] += (f.x_hat()[h - 1] - t.x[h - 1]).powi(2);
        }
    }
    let n = windows.len() as f64;
    Ok(RmseTable {
        longitudinal: lon.map(|s| (s / n).sqrt()),
        lateral: lat.map(|s| (s / n).sqrt()),
        sample_count: windows.len(),
    })
}

/// Runs the full predictor with recognized intentions and scores it.
pub fn evaluate_rmse(
    intent: &impl IntentionClassifier,
    traj: &TrajectoryModel,
    samples: &SampleSet,
    geom: &LaneGeometry,
) -> Result<RmseTable> {
    let refs: Vec<&FeatureWindow> = samples.windows.iter().collect();
    let predictions = predict_all(intent, traj, &refs, geom)?;
    rmse_from_forecasts(&refs, &predictions)
}

pub fn predict_all(
    intent: &impl IntentionClassifier,
    traj: &TrajectoryModel,
    windows: &[&FeatureWindow],
    geom: &LaneGeometry,
) -> Result<Vec<PredictionOutput>> {
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(INFERENCE_BATCH) {
        out.extend(predict_batch(intent, traj, chunk, geom)?);
    }
    Ok(out)
}

/// Keeps the anchor speed and lateral position.
pub fn constant_velocity(window: &FeatureWindow) -> Positions {
    let a = window.anchor;
    Positions {
        x: vec![a.x; HORIZON_STEPS],
        y: (1..=HORIZON_STEPS).map(|k| a.y + a.v * k as f64 * DT).collect(),
    }
}

/// Perfect forecast read back from the window's own targets.
pub fn oracle(window: &FeatureWindow) -> Option<Positions> {
    window.targets.as_ref().map(|t| Positions {
        x: t.x.clone(),
        y: t.y.clone(),
    })
}

/// Lead-time histogram bin width, seconds.
pub const LEAD_BIN_S: f64 = 0.5;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LeadTimeStats {
    pub events: usize,
    pub lead_times: Vec<f64>,
    pub missed: usize,
}

impl LeadTimeStats {
    fn push(&mut self, lead: LeadTime) {
        self.events += 1;
        match lead {
            LeadTime::Recognized(t) => self.lead_times.push(t),
            LeadTime::Missed => self.missed += 1,
        }
    }

    /// Fraction of events recognized strictly before the crossing.
    pub fn positive_rate(&self) -> f64 {
        if self.events == 0 {
            return 0.0;
        }
        self.lead_times.iter().filter(|&&t| t > 0.0).count() as f64 / self.events as f64
    }

    /// Counts per `LEAD_BIN_S` bin starting at zero.
    pub fn histogram(&self) -> Vec<usize> {
        let mut bins = Vec::new();
        for &t in &self.lead_times {
            let b = ((t / LEAD_BIN_S) + 1e-9).floor().max(0.0) as usize;
            if bins.len() <= b {
                bins.resize(b + 1, 0);
            }
            bins[b] += 1;
        }
        bins
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LeadTimeSummary {
    pub left: LeadTimeStats,
    pub right: LeadTimeStats,
}

impl LeadTimeSummary {
    pub fn events(&self) -> usize {
        self.left.events + self.right.events
    }

    pub fn positive_rate(&self) -> f64 {
        let n = self.events();
        if n == 0 {
            return 0.0;
        }
        (self.left.positive_rate() * self.left.events as f64 + self.right.positive_rate() * self.right.events as f64)
            / n as f64
    }

    /// Summary rows followed by histogram rows.
    pub fn to_table(&self) -> String {
        let mut out = String::from("class,events,recognized,missed,positive_rate,mean_lead_s\n");
        let classes = [("LLC", &self.left), ("RLC", &self.right)];
        for (name, s) in classes {
            let mean = if s.lead_times.is_empty() {
                0.0
            } else {
                s.lead_times.iter().sum::<f64>() / s.lead_times.len() as f64
            };
            let _ = writeln!(
                out,
                "{name},{},{},{},{:.6},{:.6}",
                s.events,
                s.lead_times.len(),
                s.missed,
                s.positive_rate(),
                mean
            );
        }
        out.push_str("\nclass,bin_start_s,bin_end_s,count\n");
        for (name, s) in classes {
            for (b, count) in s.histogram().iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{name},{:.1},{:.1},{count}",
                    b as f64 * LEAD_BIN_S,
                    (b + 1) as f64 * LEAD_BIN_S
                );
            }
        }
        out
    }
}

/// Recognition lead time of every detected lane change, split by direction.
pub fn evaluate_lead_times(
    classifier: &impl IntentionClassifier,
    tracks: &[Track],
    geom: &LaneGeometry,
) -> Result<LeadTimeSummary> {
    let mut summary = LeadTimeSummary::default();
    for track in tracks {
        let events = detect_lane_changes(track, geom);
        for event in &events {
            let lead = recognition_lead_time(classifier, track, geom, &events, event)?;
            match event.direction {
                Direction::Left => summary.left.push(lead),
                Direction::Right => summary.right.push(lead),
            }
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synth::{synth_generate, SynthConfig};
    use crate::dataset::{slice_windows, SliceConfig};
    use crate::intention::tests::{AlwaysKeep, Oracle};

    fn synth(lk: usize, llc: usize, rlc: usize) -> (Vec<Track>, LaneGeometry) {
        let g = LaneGeometry::default();
        let cfg = SynthConfig {
            lane_keep_tracks: lk,
            left_change_tracks: llc,
            right_change_tracks: rlc,
            duration_s: 30.0,
            ..SynthConfig::default()
        };
        (synth_generate(&cfg, &g, 5).unwrap().into_iter().map(|s| s.track).collect(), g)
    }

    #[test]
    fn oracle_forecast_scores_zero() {
        let (tracks, g) = synth(2, 1, 1);
        let set = slice_windows(&tracks, &g, &SliceConfig::default());
        let refs: Vec<&FeatureWindow> = set.windows.iter().collect();
        let forecasts: Vec<Positions> = refs.iter().map(|w| oracle(w).unwrap()).collect();
        let t = rmse_from_forecasts(&refs, &forecasts).unwrap();
        assert_eq!(t.longitudinal, [0.0; 5]);
        assert_eq!(t.lateral, [0.0; 5]);
        assert_eq!(t.sample_count, set.len());
    }

    #[test]
    fn constant_velocity_exact_without_acceleration() {
        let g = LaneGeometry::default();
        let cfg = SynthConfig {
            lane_keep_tracks: 2,
            left_change_tracks: 0,
            right_change_tracks: 0,
            duration_s: 20.0,
            accel_max: 0.0,
            lateral_noise: 0.0,
            ..SynthConfig::default()
        };
        let tracks: Vec<Track> = synth_generate(&cfg, &g, 1).unwrap().into_iter().map(|s| s.track).collect();
        let set = slice_windows(&tracks, &g, &SliceConfig::default());
        let refs: Vec<&FeatureWindow> = set.windows.iter().collect();
        let cv: Vec<Positions> = refs.iter().map(|w| constant_velocity(w)).collect();
        let t = rmse_from_forecasts(&refs, &cv).unwrap();
        assert!(t.longitudinal.iter().all(|&e| e < 1e-9));
        assert!(t.lateral.iter().all(|&e| e < 1e-12));
    }

    #[test]
    fn empty_set_is_an_error() {
        let none: [&FeatureWindow; 0] = [];
        let forecasts: [Positions; 0] = [];
        assert!(matches!(rmse_from_forecasts(&none, &forecasts), Err(Error::NoSamples)));
    }

    #[test]
    fn table_has_five_rows_of_two_metrics() {
        let t = RmseTable {
            longitudinal: [0.5, 1.0, 1.5, 2.0, 2.5],
            lateral: [0.1; 5],
            sample_count: 3,
        };
        let text = t.to_table();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 3));
        assert_eq!(lines[5], "5.0,2.500000,0.100000");
    }

    #[test]
    fn oracle_classifier_leads_by_the_labeling_interval() {
        let (tracks, g) = synth(0, 2, 2);
        let s = evaluate_lead_times(&Oracle, &tracks, &g).unwrap();
        assert_eq!(s.left.events, 2);
        assert_eq!(s.right.events, 2);
        assert!(s.left.lead_times.iter().chain(&s.right.lead_times).all(|&t| (t - 4.0).abs() < 1e-9));
        assert_eq!(s.positive_rate(), 1.0);
        assert_eq!(s.left.histogram()[8], 2);
    }

    #[test]
    fn always_keep_misses_everything() {
        let (tracks, g) = synth(1, 2, 1);
        let s = evaluate_lead_times(&AlwaysKeep, &tracks, &g).unwrap();
        assert_eq!(s.left.missed, 2);
        assert_eq!(s.right.missed, 1);
        assert_eq!(s.positive_rate(), 0.0);
    }

    #[test]
    fn no_events_gives_an_empty_summary() {
        let (tracks, g) = synth(2, 0, 0);
        let s = evaluate_lead_times(&Oracle, &tracks, &g).unwrap();
        assert_eq!(s.events(), 0);
        assert!(s.to_table().contains("LLC,0,0,0"));
    }
}
