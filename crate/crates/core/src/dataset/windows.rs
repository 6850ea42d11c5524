use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{detect_lane_changes, Track};
use crate::features::{FeatureWindow, HORIZON_STEPS, WINDOW_STEPS};
use crate::geometry::LaneGeometry;
use crate::intention::{labeled_window, Intention};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SliceConfig {
    pub window: usize,
    pub stride: usize,
    pub horizon: usize,
}

impl Default for SliceConfig {
    fn default() -> Self {
        Self {
            window: WINDOW_STEPS,
            stride: 10,
            horizon: HORIZON_STEPS,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Provenance {
    /// `(path, sha256 hex)` of every input file.
    pub sources: Vec<(String, String)>,
    pub slice: Option<SliceConfig>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct SampleSet {
    pub windows: Vec<FeatureWindow>,
    pub provenance: Provenance,
    /// Tracks too short to hold a single window.
    pub short_tracks: usize,
    /// Anchors that could not be turned into a window.
    pub skipped_anchors: usize,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn class_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for w in &self.windows {
            counts[w.intention.index()] += 1;
        }
        counts
    }

    pub fn vehicle_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.windows.iter().map(|w| w.vehicle_id).collect();
        ids.dedup();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn manifest(&self) -> String {
        let mut out = String::from("# sample set\n");
        for (path, digest) in &self.provenance.sources {
            let _ = writeln!(out, "source={path} sha256={digest}");
        }
        if let Some(s) = self.provenance.slice {
            let _ = writeln!(out, "window={}\nstride={}\nhorizon={}", s.window, s.stride, s.horizon);
        }
        if let Some(seed) = self.provenance.seed {
            let _ = writeln!(out, "seed={seed}");
        }
        let counts = self.class_counts();
        let _ = writeln!(out, "windows={}\nvehicles={}", self.len(), self.vehicle_ids().len());
        for class in Intention::ALL {
            let _ = writeln!(out, "class_{}={}", class.code(), counts[class.index()]);
        }
        let _ = writeln!(out, "short_tracks={}\nskipped_anchors={}", self.short_tracks, self.skipped_anchors);
        out
    }
}

/// Anchors of a gap-free track of `len` frames.
pub fn anchor_indices(len: usize, config: &SliceConfig) -> impl Iterator<Item = usize> {
    let first = config.window - 1;
    let stride = config.stride.max(1);
    let horizon = config.horizon;
    (first..len).step_by(stride).take_while(move |a| a + horizon < len)
}

/// Cuts every track into labeled windows, anchored every `stride` frames
/// wherever both the full history and the full horizon exist. Output order
/// is `(vehicle_id, anchor)` for tracks given in that order.
pub fn slice_windows(tracks: &[Track], geom: &LaneGeometry, config: &SliceConfig) -> SampleSet {
    let mut set = SampleSet {
        provenance: Provenance {
            slice: Some(*config),
            ..Provenance::default()
        },
        ..SampleSet::default()
    };
    let mut ordered: BTreeMap<(u32, u32), &Track> = BTreeMap::new();
    for t in tracks.iter().filter(|t| !t.is_empty()) {
        ordered.insert((t.vehicle_id, t.frames[0].frame_id), t);
    }
    for track in ordered.into_values() {
        if track.len() < config.window + config.horizon {
            set.short_tracks += 1;
            continue;
        }
        let events = detect_lane_changes(track, geom);
        for anchor in anchor_indices(track.len(), config) {
            match labeled_window(track, geom, &events, anchor, true) {
                Ok(w) => set.windows.push(w),
                Err(_) => set.skipped_anchors += 1,
            }
        }
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Frame;

    fn flat(len: usize, vid: u32) -> Track {
        Track {
            vehicle_id: vid,
            frames: (0..len)
                .map(|k| Frame {
                    frame_id: k as u32 + 1,
                    local_x: 5.49,
                    local_y: k as f64,
                    speed: 10.0,
                    accel: 0.0,
                    lane_id: 2,
                    vehicle_length: 4.0,
                    vehicle_type: 2,
                })
                .collect(),
        }
    }

    #[test]
    fn anchor_counts() {
        let g = LaneGeometry::default();
        let cfg = SliceConfig::default();
        assert_eq!(slice_windows(&[flat(99, 1)], &g, &cfg).len(), 0);
        assert_eq!(slice_windows(&[flat(99, 1)], &g, &cfg).short_tracks, 1);
        assert_eq!(slice_windows(&[flat(100, 1)], &g, &cfg).len(), 1);
        let set = slice_windows(&[flat(150, 1)], &g, &cfg);
        let frames: Vec<u32> = set.windows.iter().map(|w| w.anchor_frame).collect();
        assert_eq!(frames, vec![50, 60, 70, 80, 90, 100]);
        for len in 100..400 {
            assert_eq!(anchor_indices(len, &cfg).count(), (len - 100) / 10 + 1);
        }
    }

    #[test]
    fn ordered_by_vehicle_then_anchor() {
        let g = LaneGeometry::default();
        let set = slice_windows(&[flat(120, 9), flat(120, 2)], &g, &SliceConfig::default());
        let keys: Vec<(u32, u32)> = set.windows.iter().map(|w| (w.vehicle_id, w.anchor_frame)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert_eq!(set.vehicle_ids(), vec![2, 9]);
        assert!(set.manifest().contains("class_LK=6"));
    }
}
