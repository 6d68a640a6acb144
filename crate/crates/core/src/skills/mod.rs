//! Skill library: human framing and gesture nudges, target tracking with
//! occlusion-aware repositioning, and landmark search and question answering.

mod framing;
mod search;
mod track;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use framing::{frame_human, gesture_offset, Direction, Framing, DETECTION_RANGE, FRAMING_RANGE, GESTURE_CLEARANCE};
pub use search::{
    answer_question, body_yaw_for, candidate_yaw, landmark_nouns, scan_views, MockQa, MockScorer, QaBackend, scan_with, ScanResult, ViewCandidate,
    ViewScorer, NO_LANDMARK_ANSWER, SCAN_OFFSETS,
};
pub use track::{reposition_candidates, track_init, track_step, TrackGains, TrackInit, TrackState};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillError {
    #[error("no person within detection range")]
    NoHumanVisible,
    #[error("no object matches the tracking request")]
    NoTarget,
    #[error("tracking target lost")]
    TargetLost,
    #[error("landmark and UAV positions coincide horizontally")]
    DegenerateGeometry,
    #[error("no candidate view shows anything relevant")]
    NoInformativeView,
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
}
