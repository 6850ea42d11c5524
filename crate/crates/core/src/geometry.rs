//! Straight multi-lane road model. Lateral positions are measured from the
//! left road edge, lanes are numbered 1..=num_lanes from the left.

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::intention::Intention;

pub const I80_LANES: usize = 6;
pub const I80_LANE_WIDTH: f64 = 3.66;

#[derive(Debug, Clone, PartialEq)]
pub struct LaneGeometry {
    num_lanes: usize,
    lane_width: f64,
    markings: Vec<f64>,
    centerlines: Vec<f64>,
}

impl Default for LaneGeometry {
    fn default() -> Self {
        Self::new(I80_LANES, I80_LANE_WIDTH, 0.0).expect("valid default geometry")
    }
}

impl LaneGeometry {
    pub fn new(num_lanes: usize, lane_width: f64, leftmost_marking: f64) -> Result<Self> {
        if num_lanes == 0 || !(lane_width > 0.0) || !lane_width.is_finite() || !leftmost_marking.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "lane geometry needs num_lanes >= 1 and a positive width (got {num_lanes}, {lane_width})"
            )));
        }
        let markings: Vec<f64> = (0..=num_lanes)
            .map(|k| leftmost_marking + k as f64 * lane_width)
            .collect();
        let centerlines = markings.windows(2).map(|m| (m[0] + m[1]) / 2.0).collect();
        Ok(Self {
            num_lanes,
            lane_width,
            markings,
            centerlines,
        })
    }

    /// Parses `num_lanes`, `lane_width_m` and `leftmost_marking_m`.
    pub fn from_config(text: &str, source: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text, source)?;
        let num_lanes = kv.take("num_lanes", I80_LANES)?;
        let lane_width = kv.take("lane_width_m", I80_LANE_WIDTH)?;
        let leftmost = kv.take("leftmost_marking_m", 0.0)?;
        kv.finish()?;
        Self::new(num_lanes, lane_width, leftmost)
    }

    pub fn to_config(&self) -> String {
        format!(
            "num_lanes={}\nlane_width_m={}\nleftmost_marking_m={}\n",
            self.num_lanes, self.lane_width, self.markings[0]
        )
    }

    pub fn num_lanes(&self) -> usize {
        self.num_lanes
    }

    pub fn lane_width(&self) -> f64 {
        self.lane_width
    }

    pub fn markings(&self) -> &[f64] {
        &self.markings
    }

    pub fn centerlines(&self) -> &[f64] {
        &self.centerlines
    }

    pub fn check_lane(&self, lane: usize) -> Result<()> {
        if lane == 0 || lane > self.num_lanes {
            Err(Error::InvalidLane {
                lane,
                num_lanes: self.num_lanes,
            })
        } else {
            Ok(())
        }
    }

    pub fn centerline(&self, lane: usize) -> Result<f64> {
        self.check_lane(lane)?;
        Ok(self.centerlines[lane - 1])
    }

    /// Lane containing `x`; a position on a marking belongs to the lane on
    /// its right. Off-road positions map to the nearest edge lane.
    pub fn lane_of(&self, x: f64) -> usize {
        let inner = &self.markings[1..self.num_lanes];
        1 + inner.partition_point(|&m| m <= x)
    }

    /// Marking closest to `x`; ties go to the smaller position.
    pub fn nearest_marking(&self, x: f64) -> f64 {
        let mut best = self.markings[0];
        for &m in &self.markings[1..] {
            if (x - m).abs() < (x - best).abs() {
                best = m;
            }
        }
        best
    }
}

pub fn relative_lateral(x: f64, nearest_marking: f64) -> f64 {
    x - nearest_marking
}

pub fn lateral_deviation(x: f64, target_centerline: f64) -> f64 {
    x - target_centerline
}

/// Lane the vehicle is heading to. Changes that would leave the road
/// resolve to the current lane.
pub fn target_lane(current_lane: usize, intention: Intention, geom: &LaneGeometry) -> Result<usize> {
    geom.check_lane(current_lane)?;
    Ok(match intention {
        Intention::LaneKeep => current_lane,
        Intention::LeftChange if current_lane > 1 => current_lane - 1,
        Intention::RightChange if current_lane < geom.num_lanes() => current_lane + 1,
        _ => current_lane,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn three_markings() -> LaneGeometry {
        LaneGeometry::new(2, 3.66, 0.0).unwrap()
    }

    #[test]
    fn nearest_marking_examples() {
        let g = three_markings();
        assert_eq!(g.markings(), &[0.0, 3.66, 7.32]);
        assert_eq!(g.nearest_marking(1.0), 0.0);
        assert_eq!(g.nearest_marking(1.83), 0.0);
        assert_eq!(g.nearest_marking(3.70), 3.66);
        assert_eq!(g.nearest_marking(-4.0), 0.0);
        assert_eq!(g.nearest_marking(50.0), 7.32);
    }

    #[test]
    fn offsets() {
        assert_eq!(relative_lateral(2.5, 2.5), 0.0);
        assert!((relative_lateral(4.0, 3.66) - 0.34).abs() < 1e-12);
        assert!((relative_lateral(3.0, 3.66) + 0.66).abs() < 1e-12);
        assert_eq!(lateral_deviation(1.83, 1.83), 0.0);
        assert!((lateral_deviation(5.49, 1.83) - 3.66).abs() < 1e-12);
        assert!((lateral_deviation(1.0, 1.83) + 0.83).abs() < 1e-12);
    }

    #[test]
    fn target_lane_rules() {
        let g = LaneGeometry::default();
        assert_eq!(target_lane(3, Intention::LaneKeep, &g).unwrap(), 3);
        assert_eq!(target_lane(3, Intention::LeftChange, &g).unwrap(), 2);
        assert_eq!(target_lane(3, Intention::RightChange, &g).unwrap(), 4);
        assert_eq!(target_lane(1, Intention::LeftChange, &g).unwrap(), 1);
        assert_eq!(target_lane(6, Intention::RightChange, &g).unwrap(), 6);
        assert!(target_lane(0, Intention::LaneKeep, &g).is_err());
        assert!(target_lane(7, Intention::LaneKeep, &g).is_err());
    }

    #[test]
    fn lane_membership() {
        let g = LaneGeometry::default();
        assert_eq!(g.lane_of(0.5), 1);
        assert_eq!(g.lane_of(3.66), 2);
        assert_eq!(g.lane_of(3.659), 1);
        assert_eq!(g.lane_of(-1.0), 1);
        assert_eq!(g.lane_of(100.0), 6);
        assert!((g.centerline(1).unwrap() - 1.83).abs() < 1e-12);
    }

    #[test]
    fn config_round_trip() {
        let g = LaneGeometry::from_config("num_lanes=4\nlane_width_m=3.5\n", "geom").unwrap();
        assert_eq!(g.num_lanes(), 4);
        assert_eq!(g, LaneGeometry::from_config(&g.to_config(), "geom").unwrap());
        assert_eq!(LaneGeometry::from_config("", "geom").unwrap(), LaneGeometry::default());
        assert!(LaneGeometry::from_config("num_lanes=0", "geom").is_err());
    }

    proptest! {
        #[test]
        fn relative_lateral_is_bounded(x in 0.0f64..21.96) {
            let g = LaneGeometry::default();
            let rel = relative_lateral(x, g.nearest_marking(x));
            prop_assert!(rel.abs() <= g.lane_width() / 2.0 + 1e-12);
        }

        #[test]
        fn deviation_in_own_lane_is_bounded(x in 0.0f64..21.95) {
            let g = LaneGeometry::default();
            let dev = lateral_deviation(x, g.centerline(g.lane_of(x)).unwrap());
            prop_assert!(dev.abs() <= g.lane_width() / 2.0 + 1e-12);
        }

        #[test]
        fn lane_keep_is_identity(lane in 1usize..=6) {
            prop_assert_eq!(target_lane(lane, Intention::LaneKeep, &LaneGeometry::default()).unwrap(), lane);
        }
    }
}
