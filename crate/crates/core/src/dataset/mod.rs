//! Track ingestion, lane-change detection, windowing, splitting and the
//! synthetic generator.

pub mod events;
pub mod ngsim;
pub mod split;
pub mod synth;
pub mod track;
pub mod windows;

pub use events::{detect_lane_changes, Direction, LaneChangeEvent, DWELL_FRAMES};
pub use ngsim::{parse_trajectory_file, write_trajectory_file, ParseReport, Units};
pub use split::split_train_val;
pub use synth::{synth_generate, SynthConfig, SynthTrack};
pub use track::{Frame, Track};
pub use windows::{anchor_indices, slice_windows, Provenance, SampleSet, SliceConfig};
