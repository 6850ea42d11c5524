//! Per-step lane-relative feature vectors and the fixed-length windows the
//! two networks consume.

use ndarray::{Array2, ArrayView2};

use crate::dataset::Track;
use crate::error::{Error, Result};
use crate::geometry::{lateral_deviation, relative_lateral, LaneGeometry};
use crate::intention::Intention;

/// Sampling period, seconds.
pub const DT: f64 = 0.1;
/// Past observation steps per window.
pub const WINDOW_STEPS: usize = 50;
/// Future prediction steps.
pub const HORIZON_STEPS: usize = 50;
pub const FEATURE_DIM: usize = 8;
/// Column of `x_dev` in a feature row.
pub const X_DEV_COLUMN: usize = 3;
/// Speed is fed to the networks divided by this (m/s).
pub const SPEED_SCALE: f64 = 30.0;
/// Longitudinal acceleration is fed and predicted divided by this (m/s²).
pub const ACCEL_SCALE: f64 = 3.0;
const SMOOTHING_TAPS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub x_rel: f64,
    pub x_rel_dot: f64,
    pub x_rel_ddot: f64,
    pub x_dev: f64,
    pub x_dev_dot: f64,
    pub x_dev_ddot: f64,
    /// Longitudinal speed, m/s (unscaled).
    pub v_y: f64,
    /// Longitudinal acceleration, m/s² (unscaled).
    pub a_y: f64,
}

impl FeatureVector {
    /// Network input row, with the longitudinal terms scaled.
    pub fn to_row(&self) -> [f64; FEATURE_DIM] {
        [
            self.x_rel,
            self.x_rel_dot,
            self.x_rel_ddot,
            self.x_dev,
            self.x_dev_dot,
            self.x_dev_ddot,
            self.v_y / SPEED_SCALE,
            self.a_y / ACCEL_SCALE,
        ]
    }

    pub fn from_row(row: &[f64]) -> Self {
        Self {
            x_rel: row[0],
            x_rel_dot: row[1],
            x_rel_ddot: row[2],
            x_dev: row[3],
            x_dev_dot: row[4],
            x_dev_ddot: row[5],
            v_y: row[6] * SPEED_SCALE,
            a_y: row[7] * ACCEL_SCALE,
        }
    }
}

/// Centered moving average; the window shrinks symmetrically at the ends so
/// affine series pass through unchanged.
pub fn smooth(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    let half = SMOOTHING_TAPS / 2;
    (0..n)
        .map(|k| {
            let r = half.min(k).min(n - 1 - k);
            series[k - r..=k + r].iter().sum::<f64>() / (2 * r + 1) as f64
        })
        .collect()
}

/// First and second derivatives: central differences inside, second-order
/// one-sided stencils at both ends.
pub fn finite_diff_derivatives(series: &[f64], dt: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = series.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 samples to differentiate, got {n}")));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let x = series;
    let mut first = vec![0.0; n];
    let mut second = vec![0.0; n];
    for k in 1..n - 1 {
        first[k] = (x[k + 1] - x[k - 1]) / (2.0 * dt);
        second[k] = (x[k + 1] - 2.0 * x[k] + x[k - 1]) / (dt * dt);
    }
    first[0] = (-3.0 * x[0] + 4.0 * x[1] - x[2]) / (2.0 * dt);
    first[n - 1] = (3.0 * x[n - 1] - 4.0 * x[n - 2] + x[n - 3]) / (2.0 * dt);
    second[0] = (x[2] - 2.0 * x[1] + x[0]) / (dt * dt);
    second[n - 1] = (x[n - 1] - 2.0 * x[n - 2] + x[n - 3]) / (dt * dt);
    Ok((first, second))
}

/// Vehicle state at the anchor frame (`t = 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorState {
    pub x: f64,
    pub y: f64,
    pub v: f64,
}

/// Ground truth over the prediction horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    /// Lane the labeled intention heads to.
    pub target_lane: usize,
    /// Future longitudinal accelerations, m/s².
    pub accel: Vec<f64>,
    /// Future deviations from the labeled target lane's centerline, m.
    pub x_dev: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    pub vehicle_id: u32,
    pub anchor_frame: u32,
    /// Position of the anchor frame inside its track.
    pub anchor_index: usize,
    /// Lane containing the vehicle at the anchor frame.
    pub current_lane: usize,
    /// `WINDOW_STEPS × FEATURE_DIM`, with `x_dev` measured against
    /// `current_lane`.
    pub features: Array2<f64>,
    pub intention: Intention,
    pub anchor: AnchorState,
    pub targets: Option<Targets>,
    lane_centerlines: Vec<f64>,
}

impl FeatureWindow {
    /// Copy of the features with `x_dev` re-measured against `lane`.
    /// Derivatives of `x_dev` do not depend on the reference lane.
    pub fn features_for_lane(&self, lane: usize) -> Array2<f64> {
        let mut f = self.features.clone();
        let shift = self.lane_centerlines[self.current_lane - 1] - self.lane_centerlines[lane - 1];
        if shift != 0.0 {
            f.column_mut(X_DEV_COLUMN).mapv_inplace(|v| v + shift);
        }
        f
    }

    pub fn rows(&self) -> Vec<FeatureVector> {
        self.features
            .rows()
            .into_iter()
            .map(|r| FeatureVector::from_row(r.as_slice().expect("standard layout")))
            .collect()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }
}

fn history_range(track: &Track, anchor: usize) -> Result<std::ops::RangeInclusive<usize>> {
    if anchor + 1 < WINDOW_STEPS || anchor >= track.len() {
        return Err(Error::InsufficientFrames {
            vehicle_id: track.vehicle_id,
            anchor,
        });
    }
    Ok(anchor + 1 - WINDOW_STEPS..=anchor)
}

/// Feature rows for the 50 frames ending at `anchor` (inclusive), with
/// `x_dev` measured against `reference_lane`. Only past frames are used.
pub fn window_features(track: &Track, geom: &LaneGeometry, anchor: usize, reference_lane: usize) -> Result<Array2<f64>> {
    let range = history_range(track, anchor)?;
    let x_ref = geom.centerline(reference_lane)?;
    let frames = &track.frames[range];
    let raw: Vec<f64> = frames.iter().map(|f| f.local_x).collect();
    let x = smooth(&raw);
    let (dx, ddx) = finite_diff_derivatives(&x, DT)?;
    let mut out = Array2::zeros((WINDOW_STEPS, FEATURE_DIM));
    for (k, frame) in frames.iter().enumerate() {
        let fv = FeatureVector {
            x_rel: relative_lateral(x[k], geom.nearest_marking(x[k])),
            x_rel_dot: dx[k],
            x_rel_ddot: ddx[k],
            x_dev: lateral_deviation(x[k], x_ref),
            x_dev_dot: dx[k],
            x_dev_ddot: ddx[k],
            v_y: frame.speed,
            a_y: frame.accel,
        };
        out.row_mut(k).assign(&ndarray::ArrayView1::from(&fv.to_row()));
    }
    Ok(out)
}

/// Assembles a labeled window at `anchor`. Features measure `x_dev` against
/// the lane the vehicle occupies; targets measure it against
/// `target_lane`. With `with_targets` the 50 following frames must exist.
pub fn build_feature_window(
    track: &Track,
    geom: &LaneGeometry,
    anchor: usize,
    intention: Intention,
    target_lane: usize,
    with_targets: bool,
) -> Result<FeatureWindow> {
    history_range(track, anchor)?;
    let frame = &track.frames[anchor];
    let current_lane = geom.lane_of(frame.local_x);
    let features = window_features(track, geom, anchor, current_lane)?;
    let targets = if with_targets {
        if anchor + HORIZON_STEPS >= track.len() {
            return Err(Error::InsufficientFrames {
                vehicle_id: track.vehicle_id,
                anchor,
            });
        }
        let x_targ = geom.centerline(target_lane)?;
        let future = &track.frames[anchor + 1..=anchor + HORIZON_STEPS];
        Some(Targets {
            target_lane,
            accel: future.iter().map(|f| f.accel).collect(),
            x_dev: future.iter().map(|f| lateral_deviation(f.local_x, x_targ)).collect(),
            x: future.iter().map(|f| f.local_x).collect(),
            y: future.iter().map(|f| f.local_y).collect(),
        })
    } else {
        geom.check_lane(target_lane)?;
        None
    };
    Ok(FeatureWindow {
        vehicle_id: track.vehicle_id,
        anchor_frame: frame.frame_id,
        anchor_index: anchor,
        current_lane,
        features,
        intention,
        anchor: AnchorState {
            x: frame.local_x,
            y: frame.local_y,
            v: frame.speed,
        },
        targets,
        lane_centerlines: geom.centerlines().to_vec(),
    })
}
