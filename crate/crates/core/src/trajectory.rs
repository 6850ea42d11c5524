//! Trajectory stage: the 128-cell regressor, kinematic reconstruction of
//! positions and the end-to-end prediction pipeline.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureWindow, ACCEL_SCALE, DT, FEATURE_DIM, HORIZON_STEPS};
use crate::geometry::{target_lane, LaneGeometry};
use crate::intention::{stack_windows, Intention, IntentionClassifier, INFERENCE_BATCH, NUM_CLASSES};
use crate::nn::SeqModel;

pub const TRAJECTORY_HIDDEN: usize = 128;
/// 50 accelerations followed by 50 lateral deviations.
pub const TRAJECTORY_OUTPUTS: usize = 2 * HORIZON_STEPS;

/// Second network: one LSTM layer and a dense head emitting the whole
/// horizon in one shot.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryModel(pub SeqModel);

impl TrajectoryModel {
    pub fn zeros() -> Self {
        Self(SeqModel::zeros(FEATURE_DIM, TRAJECTORY_HIDDEN, TRAJECTORY_OUTPUTS))
    }

    pub fn init<R: Rng>(forget_bias: f64, rng: &mut R) -> Self {
        Self(SeqModel::init(FEATURE_DIM, TRAJECTORY_HIDDEN, TRAJECTORY_OUTPUTS, forget_bias, rng))
    }

    pub fn validate(&self) -> Result<()> {
        self.0.validate()?;
        if self.0.input_dim() != FEATURE_DIM || self.0.out_dim() != TRAJECTORY_OUTPUTS {
            return Err(Error::dim("trajectory head", TRAJECTORY_OUTPUTS, self.0.out_dim()));
        }
        Ok(())
    }
}

/// Training target row: scaled accelerations then deviations in meters.
pub fn regression_target(accel: &[f64], x_dev: &[f64]) -> Vec<f64> {
    accel.iter().map(|a| a / ACCEL_SCALE).chain(x_dev.iter().copied()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawPrediction {
    /// m/s²
    pub a_hat: Vec<f64>,
    /// m, relative to the lane the window was measured against.
    pub x_dev_hat: Vec<f64>,
}

fn split_head(row: &[f64]) -> RawPrediction {
    let (a, x) = row.split_at(HORIZON_STEPS);
    RawPrediction {
        a_hat: a.iter().map(|v| v * ACCEL_SCALE).collect(),
        x_dev_hat: x.to_vec(),
    }
}

/// Head outputs for windows whose `x_dev` features are measured against the
/// given lanes.
pub fn predict_raw_batch(model: &TrajectoryModel, windows: &[&FeatureWindow], lanes: &[usize]) -> Result<Vec<RawPrediction>> {
    if windows.len() != lanes.len() {
        return Err(Error::dim("lanes per window", windows.len(), lanes.len()));
    }
    let mut out = Vec::with_capacity(windows.len());
    for (chunk, lane_chunk) in windows.chunks(INFERENCE_BATCH).zip(lanes.chunks(INFERENCE_BATCH)) {
        let head = model.0.forward_batch(stack_windows(chunk, |b, _| lane_chunk[b]))?;
        out.extend(head.rows().into_iter().map(|r| split_head(r.as_slice().expect("standard layout"))));
    }
    Ok(out)
}

/// Head outputs for a window measured against its current lane.
pub fn predict_raw(model: &TrajectoryModel, window: &FeatureWindow) -> Result<RawPrediction> {
    Ok(predict_raw_batch(model, &[window], &[window.current_lane])?.remove(0))
}

/// Forward-Euler speed and position: `v(t) = v(t−1) + a(t)·δt`,
/// `y(t) = y(t−1) + v(t)·δt`, starting from `v0`, `y0`.
pub fn integrate_longitudinal(v0: f64, y0: f64, a_hat: &[f64], dt: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if !v0.is_finite() || !y0.is_finite() || !a_hat.iter().all(|a| a.is_finite()) {
        return Err(Error::NonFinite("longitudinal integration input".into()));
    }
    let mut v = v0;
    let mut y = y0;
    let mut vs = Vec::with_capacity(a_hat.len());
    let mut ys = Vec::with_capacity(a_hat.len());
    for &a in a_hat {
        v += a * dt;
        y += v * dt;
        vs.push(v);
        ys.push(y);
    }
    Ok((vs, ys))
}

/// Absolute lateral positions from deviations around the target lane's
/// centerline.
pub fn reconstruct_lateral(x_dev_hat: &[f64], lane: usize, geom: &LaneGeometry) -> Result<Vec<f64>> {
    let center = geom.centerline(lane)?;
    Ok(x_dev_hat.iter().map(|d| d + center).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionOutput {
    pub a_hat: Vec<f64>,
    pub x_dev_hat: Vec<f64>,
    pub v_hat: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub intention: [f64; NUM_CLASSES],
    pub target_lane: usize,
    /// Deviations clamped to ±lane_width.
    pub clamped: usize,
    /// Steps where the integrated speed went negative (left unclamped).
    pub negative_speeds: usize,
}

impl PredictionOutput {
    pub fn recognized(&self) -> Intention {
        Intention::argmax(&self.intention)
    }
}

/// Full pipeline for a batch: recognize intention, pick the target lane,
/// re-measure `x_dev` against it, regress, then integrate and reconstruct.
pub fn predict_batch(
    intent: &impl IntentionClassifier,
    traj: &TrajectoryModel,
    windows: &[&FeatureWindow],
    geom: &LaneGeometry,
) -> Result<Vec<PredictionOutput>> {
    let probs = intent.probabilities(windows)?;
    let lanes = windows
        .iter()
        .zip(&probs)
        .map(|(w, p)| target_lane(w.current_lane, Intention::argmax(p), geom))
        .collect::<Result<Vec<_>>>()?;
    let raw = predict_raw_batch(traj, windows, &lanes)?;
    let bound = geom.lane_width();
    windows
        .iter()
        .zip(raw)
        .zip(probs.into_iter().zip(lanes))
        .map(|((w, raw), (p, lane))| {
            let mut clamped = 0;
            let x_dev_hat: Vec<f64> = raw
                .x_dev_hat
                .iter()
                .map(|&d| {
                    if d.abs() > bound {
                        clamped += 1;
                        d.clamp(-bound, bound)
                    } else {
                        d
                    }
                })
                .collect();
            let (v_hat, y_hat) = integrate_longitudinal(w.anchor.v, w.anchor.y, &raw.a_hat, DT)?;
            let x_hat = reconstruct_lateral(&x_dev_hat, lane, geom)?;
            Ok(PredictionOutput {
                negative_speeds: v_hat.iter().filter(|&&v| v < 0.0).count(),
                a_hat: raw.a_hat,
                x_dev_hat,
                v_hat,
                y_hat,
                x_hat,
                intention: p,
                target_lane: lane,
                clamped,
            })
        })
        .collect()
}

pub fn predict(
    intent: &impl IntentionClassifier,
    traj: &TrajectoryModel,
    window: &FeatureWindow,
    geom: &LaneGeometry,
) -> Result<PredictionOutput> {
    Ok(predict_batch(intent, traj, &[window], geom)?.remove(0))
}

/// One text record: a header line with vehicle, anchor, intention
/// probabilities and target lane, then `t,x_hat,y_hat,v_hat,a_hat,x_dev_hat`
/// rows for every horizon step.
pub fn format_prediction(vehicle_id: u32, anchor_frame: u32, p: &PredictionOutput) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# vehicle={vehicle_id} anchor_frame={anchor_frame} p_LK={} p_LLC={} p_RLC={} target_lane={}",
        p.intention[0], p.intention[1], p.intention[2], p.target_lane
    );
    for k in 0..p.x_hat.len() {
        let _ = writeln!(
            out,
            "{:.1},{},{},{},{},{}",
            (k + 1) as f64 * DT,
            p.x_hat[k],
            p.y_hat[k],
            p.v_hat[k],
            p.a_hat[k],
            p.x_dev_hat[k]
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synth::{synth_generate, SynthConfig};
    use crate::intention::{labeled_window, IntentionModel};

    #[test]
    fn uniform_motion() {
        let (v, y) = integrate_longitudinal(10.0, 0.0, &[0.0; 50], 0.1).unwrap();
        assert!((y[49] - 50.0).abs() < 1e-9);
        assert!(v.iter().all(|&s| s == 10.0));
    }

    #[test]
    fn constant_acceleration_closed_form() {
        let (v, y) = integrate_longitudinal(0.0, 0.0, &[1.0; 50], 0.1).unwrap();
        // y(n) = a·δt²·n(n+1)/2
        assert!((v[49] - 5.0).abs() < 1e-9);
        assert!((y[49] - 12.75).abs() < 1e-9);
        assert!(integrate_longitudinal(0.0, 0.0, &[f64::NAN], 0.1).is_err());
        assert!(integrate_longitudinal(0.0, 0.0, &[1.0], 0.0).is_err());
    }

    #[test]
    fn lateral_reconstruction() {
        let g = LaneGeometry::default();
        let x = reconstruct_lateral(&[0.0; 5], 3, &g).unwrap();
        assert!(x.iter().all(|&v| v == g.centerline(3).unwrap()));
        let x = reconstruct_lateral(&[-0.5], 1, &g).unwrap();
        assert!((x[0] - 1.33).abs() < 1e-12);
        let a = reconstruct_lateral(&[0.3, -0.2], 2, &g).unwrap();
        let b = reconstruct_lateral(&[0.3, -0.2], 3, &g).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((q - p - g.lane_width()).abs() < 1e-12);
        }
        assert!(reconstruct_lateral(&[0.0], 7, &g).is_err());
    }

    fn sample_window() -> (FeatureWindow, LaneGeometry) {
        let g = LaneGeometry::default();
        let cfg = SynthConfig {
            lane_keep_tracks: 1,
            left_change_tracks: 0,
            right_change_tracks: 0,
            duration_s: 20.0,
            ..SynthConfig::default()
        };
        let st = synth_generate(&cfg, &g, 6).unwrap().remove(0);
        (labeled_window(&st.track, &g, &[], 70, true).unwrap(), g)
    }

    #[test]
    fn zero_models_give_centerline_uniform_motion() {
        let (w, g) = sample_window();
        let p = predict(&IntentionModel::zeros(), &TrajectoryModel::zeros(), &w, &g).unwrap();
        assert_eq!(p.intention, [1.0 / 3.0; 3]);
        assert_eq!(p.target_lane, w.current_lane);
        let c = g.centerline(w.current_lane).unwrap();
        assert!(p.x_hat.iter().all(|&x| x == c));
        let (_, y) = integrate_longitudinal(w.anchor.v, w.anchor.y, &[0.0; 50], DT).unwrap();
        assert_eq!(p.y_hat, y);
        assert_eq!(p.clamped, 0);
    }

    #[test]
    fn bias_only_head_recovers_targets() {
        let (w, g) = sample_window();
        let t = w.targets.clone().unwrap();
        let mut model = TrajectoryModel::zeros();
        model.0.head.b = ndarray::Array1::from(regression_target(&t.accel, &t.x_dev));
        let raw = predict_raw(&model, &w).unwrap();
        for (a, b) in raw.a_hat.iter().zip(&t.accel) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(raw.x_dev_hat, t.x_dev);
        let p = predict(&IntentionModel::zeros(), &model, &w, &g).unwrap();
        for (x, truth) in p.x_hat.iter().zip(&t.x) {
            assert!((x - truth).abs() < 1e-9);
        }
    }

    #[test]
    fn deviations_are_clamped() {
        let (w, g) = sample_window();
        let mut model = TrajectoryModel::zeros();
        model.0.head.b[HORIZON_STEPS] = 10.0;
        model.0.head.b[HORIZON_STEPS + 1] = -10.0;
        model.0.head.b[0] = -100.0;
        let p = predict(&IntentionModel::zeros(), &model, &w, &g).unwrap();
        assert_eq!(p.clamped, 2);
        assert_eq!(p.x_dev_hat[0], g.lane_width());
        assert_eq!(p.x_dev_hat[1], -g.lane_width());
        assert!(p.negative_speeds > 0);
    }

    #[test]
    fn record_format() {
        let (w, g) = sample_window();
        let p = predict(&IntentionModel::zeros(), &TrajectoryModel::zeros(), &w, &g).unwrap();
        let text = format_prediction(w.vehicle_id, w.anchor_frame, &p);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + HORIZON_STEPS);
        assert!(lines[0].starts_with("# vehicle=1 anchor_frame=71"));
        assert_eq!(lines[1].split(',').count(), 6);
        assert!(lines[50].starts_with("5.0,"));
    }
}
