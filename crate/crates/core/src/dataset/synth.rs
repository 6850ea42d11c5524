//! Seeded synthetic highway tracks with known lane-change schedules.
//!
//! Longitudinal motion uses piecewise-constant accelerations integrated with
//! the same forward recursion the predictor uses (`v += a·δt; y += v·δt`),
//! so integrating the recorded accelerations reproduces recorded positions
//! bit for bit. Lane changes follow a logistic lateral profile whose 10–90%
//! rise time is `change_duration_s`, renormalized so that the track ends
//! exactly one lane width from where it started.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Frame, Track};
use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::features::DT;
use crate::geometry::LaneGeometry;
use crate::intention::Intention;
use crate::nn::lstm::sigmoid;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub lane_keep_tracks: usize,
    pub left_change_tracks: usize,
    pub right_change_tracks: usize,
    pub duration_s: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    pub accel_max: f64,
    pub accel_segment_min_s: f64,
    pub accel_segment_max_s: f64,
    /// Standard deviation of white lateral position noise, meters.
    pub lateral_noise: f64,
    pub change_duration_s: f64,
    /// Minimum distance of a scheduled crossing from either track end.
    pub change_margin_s: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            lane_keep_tracks: 200,
            left_change_tracks: 50,
            right_change_tracks: 50,
            duration_s: 120.0,
            speed_min: 10.0,
            speed_max: 30.0,
            accel_max: 0.3,
            accel_segment_min_s: 4.0,
            accel_segment_max_s: 12.0,
            lateral_noise: 0.05,
            change_duration_s: 4.0,
            change_margin_s: 8.0,
        }
    }
}

impl SynthConfig {
    pub fn from_config(text: &str, source: &str) -> Result<Self> {
        let d = Self::default();
        let mut kv = KeyValues::parse(text, source)?;
        let cfg = Self {
            lane_keep_tracks: kv.take("lk_tracks", d.lane_keep_tracks)?,
            left_change_tracks: kv.take("llc_tracks", d.left_change_tracks)?,
            right_change_tracks: kv.take("rlc_tracks", d.right_change_tracks)?,
            duration_s: kv.take("duration_s", d.duration_s)?,
            speed_min: kv.take("speed_min_mps", d.speed_min)?,
            speed_max: kv.take("speed_max_mps", d.speed_max)?,
            accel_max: kv.take("accel_max_mps2", d.accel_max)?,
            accel_segment_min_s: kv.take("accel_segment_min_s", d.accel_segment_min_s)?,
            accel_segment_max_s: kv.take("accel_segment_max_s", d.accel_segment_max_s)?,
            lateral_noise: kv.take("lateral_noise_m", d.lateral_noise)?,
            change_duration_s: kv.take("change_duration_s", d.change_duration_s)?,
            change_margin_s: kv.take("change_margin_s", d.change_margin_s)?,
        };
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_config(&self) -> String {
        format!(
            "lk_tracks={}\nllc_tracks={}\nrlc_tracks={}\nduration_s={}\nspeed_min_mps={}\nspeed_max_mps={}\n\
             accel_max_mps2={}\naccel_segment_min_s={}\naccel_segment_max_s={}\nlateral_noise_m={}\n\
             change_duration_s={}\nchange_margin_s={}\n",
            self.lane_keep_tracks,
            self.left_change_tracks,
            self.right_change_tracks,
            self.duration_s,
            self.speed_min,
            self.speed_max,
            self.accel_max,
            self.accel_segment_min_s,
            self.accel_segment_max_s,
            self.lateral_noise,
            self.change_duration_s,
            self.change_margin_s,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(format!("synthetic config: {msg}")));
        let finite = [
            self.duration_s,
            self.speed_min,
            self.speed_max,
            self.accel_max,
            self.accel_segment_min_s,
            self.accel_segment_max_s,
            self.lateral_noise,
            self.change_duration_s,
            self.change_margin_s,
        ];
        if !finite.iter().all(|v| v.is_finite()) {
            return bad("values must be finite");
        }
        if !(0.0 <= self.speed_min && self.speed_min < self.speed_max) {
            return bad("need 0 <= speed_min < speed_max");
        }
        if self.accel_max < 0.0 || self.lateral_noise < 0.0 {
            return bad("accel_max and lateral_noise must be non-negative");
        }
        if !(0.0 < self.accel_segment_min_s && self.accel_segment_min_s <= self.accel_segment_max_s) {
            return bad("need 0 < accel_segment_min_s <= accel_segment_max_s");
        }
        if !(self.change_duration_s > 0.0) {
            return bad("change_duration_s must be positive");
        }
        if self.duration_s < 2.0 * self.change_margin_s + DT || self.change_margin_s < 0.0 {
            return bad("duration_s must exceed twice change_margin_s");
        }
        if self.lane_keep_tracks + self.left_change_tracks + self.right_change_tracks == 0 {
            return bad("no tracks requested");
        }
        Ok(())
    }

    pub fn frames_per_track(&self) -> usize {
        (self.duration_s / DT).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTrack {
    pub track: Track,
    pub kind: Intention,
    /// Index of the first noise-free frame inside the destination lane.
    pub scheduled_cross: Option<usize>,
}

/// Generates tracks in a seed-shuffled class order with vehicle ids `1..=N`.
pub fn synth_generate(config: &SynthConfig, geom: &LaneGeometry, seed: u64) -> Result<Vec<SynthTrack>> {
    config.validate()?;
    if geom.num_lanes() < 2 && config.left_change_tracks + config.right_change_tracks > 0 {
        return Err(Error::InvalidArgument("lane changes need at least two lanes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kinds = Vec::new();
    kinds.extend(std::iter::repeat_n(Intention::LaneKeep, config.lane_keep_tracks));
    kinds.extend(std::iter::repeat_n(Intention::LeftChange, config.left_change_tracks));
    kinds.extend(std::iter::repeat_n(Intention::RightChange, config.right_change_tracks));
    kinds.shuffle(&mut rng);
    kinds
        .into_iter()
        .enumerate()
        .map(|(k, kind)| generate_one(config, geom, k as u32 + 1, kind, &mut rng))
        .collect()
}

fn generate_one(config: &SynthConfig, geom: &LaneGeometry, vehicle_id: u32, kind: Intention, rng: &mut ChaCha8Rng) -> Result<SynthTrack> {
    let n = config.frames_per_track();
    let lanes = geom.num_lanes();
    let start_lane = match kind {
        Intention::LaneKeep => rng.random_range(1..=lanes),
        Intention::LeftChange => rng.random_range(2..=lanes),
        Intention::RightChange => rng.random_range(1..lanes),
    };
    let base = geom.centerline(start_lane)?;
    let shift = match kind {
        Intention::LaneKeep => 0.0,
        Intention::LeftChange => -geom.lane_width(),
        Intention::RightChange => geom.lane_width(),
    };

    // Longitudinal: piecewise-constant acceleration kept inside the speed band.
    let mut accel = vec![0.0; n];
    let mut speed = vec![0.0; n];
    let mut pos = vec![0.0; n];
    speed[0] = rng.random_range(config.speed_min..=config.speed_max);
    pos[0] = rng.random_range(0.0..50.0);
    let mut k = 0;
    let mut v = speed[0];
    while k < n {
        let seg_s = rng.random_range(config.accel_segment_min_s..=config.accel_segment_max_s);
        let len = ((seg_s / DT).round() as usize).max(1);
        // Only frames 1.. are integrated; frame 0 carries the initial speed.
        let integrated = (k + len).min(n) - k.max(1).min(k + len);
        let span = integrated.max(1) as f64 * DT;
        let mut a = if config.accel_max > 0.0 {
            rng.random_range(-config.accel_max..=config.accel_max)
        } else {
            0.0
        };
        if v + a * span > config.speed_max {
            a = (config.speed_max - v) / span;
        } else if v + a * span < config.speed_min {
            a = (config.speed_min - v) / span;
        }
        for (j, slot) in accel.iter_mut().enumerate().skip(k).take(len) {
            *slot = a;
            if j > 0 {
                v += a * DT;
            }
        }
        k += len;
    }
    for k in 1..n {
        speed[k] = speed[k - 1] + accel[k] * DT;
        pos[k] = pos[k - 1] + speed[k] * DT;
    }

    // Lateral.
    let mut clean = vec![base; n];
    let mut scheduled_cross = None;
    if kind != Intention::LaneKeep {
        let total = (n - 1) as f64 * DT;
        let t_c = rng.random_range(config.change_margin_s..=total - config.change_margin_s);
        let tau = config.change_duration_s / (2.0 * 9f64.ln());
        let s0 = sigmoid(-t_c / tau);
        let s1 = sigmoid((total - t_c) / tau);
        for (k, x) in clean.iter_mut().enumerate() {
            let t = k as f64 * DT;
            *x = base + shift * (sigmoid((t - t_c) / tau) - s0) / (s1 - s0);
        }
        let to_lane = if shift < 0.0 { start_lane - 1 } else { start_lane + 1 };
        scheduled_cross = clean.iter().position(|&x| geom.lane_of(x) == to_lane);
    }
    let noise = Normal::new(0.0, config.lateral_noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let length = rng.random_range(4.0..5.5);

    let frames = (0..n)
        .map(|k| {
            let x = if config.lateral_noise > 0.0 {
                clean[k] + noise.sample(rng)
            } else {
                clean[k]
            };
            Frame {
                frame_id: k as u32 + 1,
                local_x: x,
                local_y: pos[k],
                speed: speed[k],
                accel: accel[k],
                lane_id: geom.lane_of(x) as u32,
                vehicle_length: length,
                vehicle_type: 2,
            }
        })
        .collect();
    Ok(SynthTrack {
        track: Track { vehicle_id, frames },
        kind,
        scheduled_cross,
    })
}
