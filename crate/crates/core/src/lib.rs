//! Dual-LSTM intention-aware vehicle trajectory prediction.
//!
//! A first network classifies lane-keep / left-change / right-change from a
//! 5 s window of lane-relative features. A second network, fed the same
//! window measured against the lane the recognized intention points to,
//! emits 50 future accelerations and lateral deviations that are integrated
//! into a 5 s trajectory.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod intention;
pub mod nn;
pub mod train;
pub mod trajectory;

pub use checkpoint::Checkpoint;
pub use error::{Error, Result};
pub use geometry::LaneGeometry;
pub use intention::{Intention, IntentionClassifier, IntentionModel};
pub use train::{HyperConfig, TrainHistory};
pub use trajectory::{PredictionOutput, TrajectoryModel};
