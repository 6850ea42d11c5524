use super::Track;
use crate::geometry::LaneGeometry;

/// Frames a vehicle must stay in the destination lane for a crossing to
/// count as a completed lane change (2 s at 10 Hz).
pub const DWELL_FRAMES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaneChangeEvent {
    pub vehicle_id: u32,
    pub direction: Direction,
    /// Index (within the track) of the first frame in the new lane.
    pub cross_index: usize,
    pub cross_frame: u32,
    pub from_lane: usize,
    pub to_lane: usize,
}

/// Completed lane changes, with lane membership recomputed from the lateral
/// position. A crossing counts when the vehicle then stays in the new lane
/// for [`DWELL_FRAMES`] frames and the new lane neighbors the last lane it
/// had settled in; excursions that come back early produce nothing.
pub fn detect_lane_changes(track: &Track, geom: &LaneGeometry) -> Vec<LaneChangeEvent> {
    let lanes: Vec<usize> = track.lateral().map(|x| geom.lane_of(x)).collect();
    let Some(&first) = lanes.first() else {
        return Vec::new();
    };
    let mut settled = first;
    let mut events = Vec::new();
    for k in 1..lanes.len() {
        let lane = lanes[k];
        if lane == lanes[k - 1] {
            continue;
        }
        let dwells = k + DWELL_FRAMES <= lanes.len() && lanes[k..k + DWELL_FRAMES].iter().all(|&l| l == lane);
        if !dwells {
            continue;
        }
        if lane.abs_diff(settled) == 1 {
            events.push(LaneChangeEvent {
                vehicle_id: track.vehicle_id,
                direction: if lane < settled { Direction::Left } else { Direction::Right },
                cross_index: k,
                cross_frame: track.frames[k].frame_id,
                from_lane: settled,
                to_lane: lane,
            });
        }
        settled = lane;
    }
    events
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Frame;

    fn track(xs: impl IntoIterator<Item = f64>) -> Track {
        Track {
            vehicle_id: 3,
            frames: xs
                .into_iter()
                .enumerate()
                .map(|(k, x)| Frame {
                    frame_id: 100 + k as u32,
                    local_x: x,
                    local_y: k as f64,
                    speed: 10.0,
                    accel: 0.0,
                    lane_id: 0,
                    vehicle_length: 4.0,
                    vehicle_type: 2,
                })
                .collect(),
        }
    }

    #[test]
    fn centerline_has_no_events() {
        let g = LaneGeometry::default();
        assert!(detect_lane_changes(&track(std::iter::repeat(5.49).take(200)), &g).is_empty());
        assert!(detect_lane_changes(&track([]), &g).is_empty());
    }

    #[test]
    fn step_change_left() {
        let g = LaneGeometry::default();
        let xs = (0..100).map(|k| if k < 40 { 5.49 } else { 1.83 });
        let ev = detect_lane_changes(&track(xs), &g);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].direction, Direction::Left);
        assert_eq!(ev[0].cross_index, 40);
        assert_eq!(ev[0].cross_frame, 140);
        assert_eq!((ev[0].from_lane, ev[0].to_lane), (2, 1));
    }

    #[test]
    fn aborted_change_is_ignored() {
        let g = LaneGeometry::default();
        // 0.8 s in the neighboring lane, then back.
        let xs = (0..200).map(|k| if (50..58).contains(&k) { 9.15 } else { 5.49 });
        assert!(detect_lane_changes(&track(xs), &g).is_empty());
    }

    #[test]
    fn flicker_at_marking_counts_once() {
        let g = LaneGeometry::default();
        let xs = (0..100).map(|k| match k {
            0..=29 => 5.49,
            30 => 3.6,
            31 => 3.7,
            _ => 3.0,
        });
        let ev = detect_lane_changes(&track(xs), &g);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].cross_index, 32);
    }

    #[test]
    fn change_too_close_to_end_is_not_successful() {
        let g = LaneGeometry::default();
        let xs = (0..100).map(|k| if k < 90 { 5.49 } else { 9.15 });
        assert!(detect_lane_changes(&track(xs), &g).is_empty());
    }
}
