//! Client/station message protocol: one JSON object per line, discriminated
//! by `type`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::CameraModel;
use crate::mission::MissionState;
use crate::planner::{FailureCause, PlanDocument, StepStatus};
use crate::skills::Direction;
use crate::world::{UavMode, UavState, VisibleObject};
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventLevel {
    Info,
    Warn,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WireMessage {
    // Client to station.
    Command {
        text: String,
    },
    Click {
        u: f64,
        v: f64,
    },
    Gesture {
        dir: Direction,
    },
    Abort {},

    // Station to client.
    Telemetry {
        tick: u64,
        pose: UavState,
        mode: UavMode,
        mission_state: MissionState,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        plan_id: Option<String>,
    },
    Plan {
        plan: PlanDocument,
    },
    StepUpdate {
        index: usize,
        status: StepStatus,
        #[serde(default)]
        cause: Option<FailureCause>,
    },
    FrameMeta {
        tick: u64,
        objects: Vec<VisibleObject>,
        camera: CameraModel,
        pose_at_capture: UavState,
    },
    /// Planned long-range route for the map view.
    Route {
        map: String,
        waypoints: Vec<Vec3>,
        samples: Vec<Vec3>,
    },
    Answer {
        text: String,
    },
    Event {
        level: EventLevel,
        text: String,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        replay: bool,
    },
}

impl WireMessage {
    pub fn event(level: EventLevel, text: impl Into<String>) -> Self {
        WireMessage::Event { level, text: text.into(), replay: false }
    }

    /// True for messages a client may send.
    pub fn is_client(&self) -> bool {
        matches!(
            self,
            WireMessage::Command { .. } | WireMessage::Click { .. } | WireMessage::Gesture { .. } | WireMessage::Abort {}
        )
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            WireMessage::Command { .. } => "command",
            WireMessage::Click { .. } => "click",
            WireMessage::Gesture { .. } => "gesture",
            WireMessage::Abort {} => "abort",
            WireMessage::Telemetry { .. } => "telemetry",
            WireMessage::Plan { .. } => "plan",
            WireMessage::StepUpdate { .. } => "step_update",
            WireMessage::FrameMeta { .. } => "frame_meta",
            WireMessage::Route { .. } => "route",
            WireMessage::Answer { .. } => "answer",
            WireMessage::Event { .. } => "event",
        }
    }
}

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: message spans more than one line")]
    Multiline { line: usize },
}

impl DecodeError {
    pub fn line(&self) -> usize {
        match self {
            DecodeError::Json { line, .. } | DecodeError::Multiline { line } => *line,
        }
    }
}

/// Serializes to a single line without the trailing newline.
pub fn encode(msg: &WireMessage) -> String {
    serde_json::to_string(msg).expect("wire messages always serialize")
}

pub fn decode(line: &str) -> Result<WireMessage, DecodeError> {
    decode_at(line, 1)
}

fn decode_at(line: &str, n: usize) -> Result<WireMessage, DecodeError> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    if line.contains('\n') {
        return Err(DecodeError::Multiline { line: n });
    }
    serde_json::from_str(line).map_err(|source| DecodeError::Json { line: n, source })
}

/// Decodes an NDJSON document; blank lines are skipped. Errors carry the
/// 1-based line number.
pub fn decode_all(text: &str) -> Result<Vec<WireMessage>, DecodeError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| decode_at(l, i + 1))
        .collect()
}

/// Reply sent for a line that failed to decode.
pub fn decode_error_event(err: &DecodeError) -> WireMessage {
    WireMessage::event(EventLevel::Error, format!("undecodable message: {err}"))
}
