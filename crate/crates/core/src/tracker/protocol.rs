//! Wire messages. One JSON object per line, UTF-8.
//!
//! ```text
//! client -> server  {"category":"tracker","request":"set","values":{"push":true,"version":1}}
//! server -> client  {"category":"tracker","statuscode":200}
//! server -> client  {"category":"tracker","statuscode":200,"values":{"frame":{"ts":..,"lefteye":{..},"righteye":{..}}}}
//! ```
//!
//! A numeric eye field that the tracker could not measure is sent as `null`.

use super::{EyeSample, GazeFrame, Point};
use serde::{Deserialize, Serialize};

pub const CATEGORY: &str = "tracker";
pub const STATUS_OK: u16 = 200;
pub const STATUS_BAD_REQUEST: u16 = 400;
pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubscribeRequest {
    pub category: String,
    pub request: String,
    pub values: SubscribeValues,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubscribeValues {
    pub push: bool,
    pub version: u32,
}

impl SubscribeRequest {
    pub fn push() -> Self {
        SubscribeRequest {
            category: CATEGORY.into(),
            request: "set".into(),
            values: SubscribeValues { push: true, version: PROTOCOL_VERSION },
        }
    }

    pub fn is_push_subscription(&self) -> bool {
        self.category == CATEGORY && self.request == "set" && self.values.push
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reply {
    pub category: String,
    pub statuscode: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<FrameValues>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameValues {
    pub frame: WireFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireFrame {
    pub ts: i64,
    pub lefteye: WireEye,
    pub righteye: WireEye,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireEye {
    pub psize: Option<f64>,
    pub pcx: Option<f64>,
    pub pcy: Option<f64>,
    pub gx: Option<f64>,
    pub gy: Option<f64>,
    pub valid: bool,
}

impl Reply {
    pub fn ack() -> Self {
        Reply { category: CATEGORY.into(), statuscode: STATUS_OK, values: None }
    }

    pub fn bad_request() -> Self {
        Reply { category: CATEGORY.into(), statuscode: STATUS_BAD_REQUEST, values: None }
    }

    pub fn frame(frame: &GazeFrame) -> Self {
        Reply {
            category: CATEGORY.into(),
            statuscode: STATUS_OK,
            values: Some(FrameValues { frame: WireFrame::from(frame) }),
        }
    }
}

fn split(p: Option<Point>) -> (Option<f64>, Option<f64>) {
    match p {
        Some(p) => (Some(p.x), Some(p.y)),
        None => (None, None),
    }
}

fn join(x: Option<f64>, y: Option<f64>) -> Option<Point> {
    Some(Point::new(x?, y?))
}

impl From<&EyeSample> for WireEye {
    fn from(eye: &EyeSample) -> Self {
        let (pcx, pcy) = split(eye.pupil_center);
        let (gx, gy) = split(eye.gaze);
        WireEye { psize: eye.pupil_size, pcx, pcy, gx, gy, valid: eye.valid }
    }
}

impl From<&WireEye> for EyeSample {
    fn from(eye: &WireEye) -> Self {
        EyeSample {
            pupil_size: eye.psize,
            pupil_center: join(eye.pcx, eye.pcy),
            gaze: join(eye.gx, eye.gy),
            valid: eye.valid,
        }
    }
}

impl From<&GazeFrame> for WireFrame {
    fn from(frame: &GazeFrame) -> Self {
        WireFrame { ts: frame.ts_ms, lefteye: (&frame.left).into(), righteye: (&frame.right).into() }
    }
}

impl From<&WireFrame> for GazeFrame {
    fn from(frame: &WireFrame) -> Self {
        GazeFrame { ts_ms: frame.ts, left: (&frame.lefteye).into(), right: (&frame.righteye).into() }
    }
}

/// Serialize a message as one protocol line, newline included.
pub fn to_line<T: Serialize>(msg: &T) -> String {
    let mut line = serde_json::to_string(msg).expect("protocol messages always serialize");
    line.push('\n');
    line
}
