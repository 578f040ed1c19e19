//! Eye-tracker acquisition: the newline-delimited JSON push protocol, a
//! blocking client, a mock server, and CSV persistence for gaze and trial logs.
//!
//! Every timestamp in this module is on the tracker ("gaze") clock.

mod client;
mod logs;
mod mock;
pub mod protocol;

pub use client::TrackerClient;
pub use logs::{
    load_gaze, load_trials, read_gaze, read_trials, record_gaze, record_trials, write_gaze, write_trials, GazeWriter,
    GAZE_HEADER, TRIAL_HEADER,
};
pub use mock::{FrameSource, MockTracker, Pacing};

use crate::scheduler::{Direction, TrialSpec};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Nominal tracker sample rate.
pub const FRAME_RATE_HZ: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// One eye of one tracker frame. Missing numeric values are `None`; an
/// invalid sample is never interpreted as a pupil size, whatever it carries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EyeSample {
    /// Uncalibrated, linear units.
    pub pupil_size: Option<f64>,
    /// Normalized camera coordinates.
    pub pupil_center: Option<Point>,
    /// Screen pixels.
    pub gaze: Option<Point>,
    pub valid: bool,
}

impl EyeSample {
    pub fn missing() -> Self {
        EyeSample { pupil_size: None, pupil_center: None, gaze: None, valid: false }
    }

    pub fn usable_pupil(&self) -> Option<f64> {
        if self.valid {
            self.pupil_size
        } else {
            None
        }
    }

    pub fn usable_center(&self) -> Option<Point> {
        if self.valid {
            self.pupil_center
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Eye {
    Left,
    Right,
}

impl FromStr for Eye {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left" => Ok(Eye::Left),
            "right" => Ok(Eye::Right),
            other => Err(format!("unknown eye {other:?}")),
        }
    }
}

impl fmt::Display for Eye {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Eye::Left => "left",
            Eye::Right => "right",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeFrame {
    pub ts_ms: i64,
    pub left: EyeSample,
    pub right: EyeSample,
}

impl GazeFrame {
    pub fn eye(&self, eye: Eye) -> &EyeSample {
        match eye {
            Eye::Left => &self.left,
            Eye::Right => &self.right,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKey {
    Left,
    Right,
    None,
}

impl ResponseKey {
    pub fn as_str(self) -> &'static str {
        match self {
            ResponseKey::Left => "left",
            ResponseKey::Right => "right",
            ResponseKey::None => "none",
        }
    }

    pub fn matches(self, direction: Direction) -> bool {
        matches!((self, direction), (ResponseKey::Left, Direction::Left) | (ResponseKey::Right, Direction::Right))
    }
}

impl FromStr for ResponseKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left" => Ok(ResponseKey::Left),
            "right" => Ok(ResponseKey::Right),
            "none" => Ok(ResponseKey::None),
            other => Err(format!("unknown response key {other:?}")),
        }
    }
}

/// Behavioural outcome of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub session_id: String,
    pub trial: TrialSpec,
    pub cue_onset_ms: i64,
    pub target_onset_ms: i64,
    pub response_key: ResponseKey,
    /// First keypress time minus target onset.
    pub rt_ms: Option<i64>,
    pub correct: Option<bool>,
}

impl TrialRecord {
    /// Record for a trial that has been scheduled but not run yet.
    pub fn pending(session_id: &str, trial: TrialSpec, cue_onset_ms: i64, target_onset_ms: i64) -> Self {
        TrialRecord {
            session_id: session_id.to_string(),
            trial,
            cue_onset_ms,
            target_onset_ms,
            response_key: ResponseKey::None,
            rt_ms: None,
            correct: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrackerError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}: {source}")]
    Open { path: String, source: std::io::Error },
    #[error("cannot connect to tracker at {addr}: {source}")]
    Connect { addr: String, source: std::io::Error },
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("protocol error on line {line_no} ({reason}): {line}")]
    Protocol { line_no: usize, line: String, reason: String },
    #[error("tracker closed the connection before acknowledging the subscription")]
    NoAck,
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: String, column: String },
    #[error("{path}: row {row}, column `{column}`: cannot parse {value:?}")]
    BadCell { path: String, row: usize, column: String, value: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = TrackerError> = std::result::Result<T, E>;
