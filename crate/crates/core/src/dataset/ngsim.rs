//! NGSIM trajectory text files.
//!
//! Rows are whitespace- or comma-delimited with the 18-column layout of the
//! public US-101/I-80 releases. Only these columns are read (0-based):
//!
//! | idx | column     | use                         |
//! |-----|------------|-----------------------------|
//! | 0   | Vehicle_ID | grouping                    |
//! | 1   | Frame_ID   | ordering, gap detection     |
//! | 4   | Local_X    | lateral position            |
//! | 5   | Local_Y    | longitudinal position       |
//! | 8   | v_Length   | vehicle length              |
//! | 10  | v_Class    | vehicle type code           |
//! | 11  | v_Vel      | speed                       |
//! | 12  | v_Acc      | acceleration                |
//! | 13  | Lane_ID    | reported lane (informative) |
//!
//! A leading non-numeric line is treated as a header.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use super::{Frame, Track};
use crate::error::{Error, Result};

pub const FEET_TO_METERS: f64 = 0.3048;
const MIN_COLUMNS: usize = 14;

pub const HEADER: &str = "Vehicle_ID,Frame_ID,Total_Frames,Global_Time,Local_X,Local_Y,Global_X,Global_Y,\
v_Length,v_Width,v_Class,v_Vel,v_Acc,Lane_ID,Preceding,Following,Space_Headway,Time_Headway";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    Feet,
    Meters,
}

impl std::str::FromStr for Units {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "feet" | "ft" => Ok(Units::Feet),
            "meters" | "m" => Ok(Units::Meters),
            other => Err(Error::InvalidArgument(format!("unknown unit mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParseReport {
    pub tracks: Vec<Track>,
    pub rows: usize,
    pub malformed: usize,
    /// Extra tracks created by splitting at frame gaps.
    pub gap_splits: usize,
}

fn parse_row(fields: &[&str], scale: f64) -> std::result::Result<(u32, Frame), String> {
    if fields.len() < MIN_COLUMNS {
        return Err(format!("expected at least {MIN_COLUMNS} columns, got {}", fields.len()));
    }
    let int = |i: usize| -> std::result::Result<u32, String> {
        let v: f64 = fields[i].parse().map_err(|_| format!("column {i}: bad number {:?}", fields[i]))?;
        if v.fract() != 0.0 || !(0.0..=u32::MAX as f64).contains(&v) {
            return Err(format!("column {i}: expected a non-negative integer, got {:?}", fields[i]));
        }
        Ok(v as u32)
    };
    let real = |i: usize| -> std::result::Result<f64, String> {
        let v: f64 = fields[i].parse().map_err(|_| format!("column {i}: bad number {:?}", fields[i]))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("column {i}: non-finite value"))
        }
    };
    Ok((
        int(0)?,
        Frame {
            frame_id: int(1)?,
            local_x: real(4)? * scale,
            local_y: real(5)? * scale,
            vehicle_length: real(8)? * scale,
            vehicle_type: int(10)?,
            speed: real(11)? * scale,
            accel: real(12)? * scale,
            lane_id: int(13)?,
        },
    ))
}

/// Reads NGSIM rows, groups them per vehicle, sorts by frame and splits at
/// frame gaps. Malformed rows are skipped; more than 1% of them is fatal.
pub fn parse_trajectory_file<R: BufRead>(input: R, source: &str, units: Units) -> Result<ParseReport> {
    let scale = match units {
        Units::Feet => FEET_TO_METERS,
        Units::Meters => 1.0,
    };
    let mut by_vehicle: BTreeMap<u32, Vec<Frame>> = BTreeMap::new();
    let mut report = ParseReport::default();
    let mut first_bad: Option<(usize, String)> = None;
    let mut seen_data = false;

    for (idx, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if fields.is_empty() {
            continue;
        }
        if !seen_data && fields[0].parse::<f64>().is_err() {
            seen_data = true;
            continue;
        }
        seen_data = true;
        report.rows += 1;
        match parse_row(&fields, scale) {
            Ok((vid, frame)) => by_vehicle.entry(vid).or_default().push(frame),
            Err(msg) => {
                report.malformed += 1;
                first_bad.get_or_insert((idx + 1, msg));
            }
        }
    }

    for (vehicle_id, mut frames) in by_vehicle {
        frames.sort_by_key(|f| f.frame_id);
        let before = frames.len();
        frames.dedup_by_key(|f| f.frame_id);
        if frames.len() != before {
            report.malformed += before - frames.len();
            first_bad.get_or_insert((0, format!("duplicate frames for vehicle {vehicle_id}")));
        }
        let mut current: Vec<Frame> = Vec::new();
        for f in frames {
            if let Some(last) = current.last() {
                if f.frame_id != last.frame_id + 1 {
                    report.tracks.push(Track {
                        vehicle_id,
                        frames: std::mem::take(&mut current),
                    });
                    report.gap_splits += 1;
                }
            }
            current.push(f);
        }
        if !current.is_empty() {
            report.tracks.push(Track { vehicle_id, frames: current });
        }
    }

    if report.malformed * 100 > report.rows {
        let (first_line, first_msg) = first_bad.unwrap_or_default();
        return Err(Error::Malformed {
            path: source.to_string(),
            malformed: report.malformed,
            total: report.rows,
            first_line,
            first_msg,
        });
    }
    Ok(report)
}

/// Writes tracks in meters using the full 18-column layout. Columns this
/// crate does not model are filled with zeros.
pub fn write_trajectory_file<W: Write>(tracks: &[Track], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{HEADER}")?;
    for track in tracks {
        let total = track.frames.len();
        for f in &track.frames {
            writeln!(
                out,
                "{},{},{},{},{},{},0,0,{},1.8,{},{},{},{},0,0,0,0",
                track.vehicle_id,
                f.frame_id,
                total,
                u64::from(f.frame_id) * 100,
                f.local_x,
                f.local_y,
                f.vehicle_length,
                f.vehicle_type,
                f.speed,
                f.accel,
                f.lane_id,
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(vid: u32, frame: u32, x: f64) -> String {
        format!("{vid} {frame} 10 0 {x} 100.0 0 0 15.0 6.0 2 30.0 1.5 3 0 0 0 0\n")
    }

    #[test]
    fn empty_input() {
        let r = parse_trajectory_file("".as_bytes(), "empty", Units::Meters).unwrap();
        assert!(r.tracks.is_empty());
        assert_eq!(r.malformed, 0);
    }

    #[test]
    fn groups_and_sorts_interleaved_vehicles() {
        let text: String = [
            row(2, 12, 1.0),
            row(1, 5, 1.0),
            row(2, 10, 1.0),
            row(1, 3, 1.0),
            row(2, 11, 1.0),
            row(1, 4, 1.0),
        ]
        .concat();
        let r = parse_trajectory_file(text.as_bytes(), "t", Units::Meters).unwrap();
        assert_eq!(r.tracks.len(), 2);
        assert_eq!(r.tracks[0].vehicle_id, 1);
        let ids: Vec<u32> = r.tracks[0].frames.iter().map(|f| f.frame_id).collect();
        assert_eq!(ids, vec![3, 4, 5]);
        let ids: Vec<u32> = r.tracks[1].frames.iter().map(|f| f.frame_id).collect();
        assert_eq!(ids, vec![10, 11, 12]);
    }

    #[test]
    fn feet_conversion() {
        let r = parse_trajectory_file(row(1, 1, 12.0).as_bytes(), "t", Units::Feet).unwrap();
        let f = &r.tracks[0].frames[0];
        assert!((f.local_x - 3.6576).abs() < 1e-12);
        assert!((f.speed - 30.0 * 0.3048).abs() < 1e-12);
        assert_eq!(f.lane_id, 3);
    }

    #[test]
    fn splits_at_gaps() {
        let text: String = [row(1, 1, 1.0), row(1, 2, 1.0), row(1, 5, 1.0), row(1, 6, 1.0)].concat();
        let r = parse_trajectory_file(text.as_bytes(), "t", Units::Meters).unwrap();
        assert_eq!(r.tracks.len(), 2);
        assert_eq!(r.gap_splits, 1);
        assert!(r.tracks.iter().all(Track::is_contiguous));
    }

    #[test]
    fn header_and_commas() {
        let text = format!("{HEADER}\n1,1,1,0,2.0,3.0,0,0,4.0,1.8,2,10.0,0.5,1,0,0,0,0\n");
        let r = parse_trajectory_file(text.as_bytes(), "t", Units::Meters).unwrap();
        assert_eq!(r.rows, 1);
        assert_eq!(r.tracks[0].frames[0].local_y, 3.0);
    }

    #[test]
    fn malformed_threshold() {
        let mut text: String = (1..=200).map(|k| row(1, k, 1.0)).collect();
        text.push_str("1 201 garbage\n");
        let r = parse_trajectory_file(text.as_bytes(), "t", Units::Meters).unwrap();
        assert_eq!(r.malformed, 1);
        assert_eq!(r.tracks[0].len(), 200);

        let text = [row(1, 1, 1.0), "1 2 x y\n".to_string()].concat();
        let err = parse_trajectory_file(text.as_bytes(), "data.txt", Units::Meters).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("data.txt") && msg.contains("line 2"), "{msg}");
    }

    fn arb_track() -> impl Strategy<Value = Track> {
        (1u32..50, 1u32..1000, prop::collection::vec((-5.0f64..30.0, 0.0f64..500.0, 0.0f64..40.0, -4.0f64..4.0), 1..20))
            .prop_map(|(vid, start, rows)| Track {
                vehicle_id: vid,
                frames: rows
                    .into_iter()
                    .enumerate()
                    .map(|(k, (x, y, v, a))| Frame {
                        frame_id: start + k as u32,
                        local_x: x,
                        local_y: y,
                        speed: v,
                        accel: a,
                        lane_id: 2,
                        vehicle_length: 4.25,
                        vehicle_type: 2,
                    })
                    .collect(),
            })
    }

    proptest! {
        #[test]
        fn write_then_parse_round_trips(track in arb_track()) {
            let mut buf = Vec::new();
            write_trajectory_file(std::slice::from_ref(&track), &mut buf).unwrap();
            let r = parse_trajectory_file(buf.as_slice(), "rt", Units::Meters).unwrap();
            prop_assert_eq!(r.tracks, vec![track]);
        }
    }
}
