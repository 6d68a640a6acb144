//! Mission lifecycle state machine run by the station.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::UavMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum MissionState {
    Grounded,
    Ascending,
    StandbyHover,
    Planning,
    Executing { step: usize },
    Replanning,
    Returning,
    MissionFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "event", content = "step", rename_all = "snake_case")]
pub enum MissionEvent {
    Launch,
    HoverReached,
    Command,
    PlanAccepted,
    PlanningFailed,
    StepStarted(usize),
    StepFailed,
    PlanSucceeded,
    Abort,
    AttemptsExhausted,
    ReturnComplete,
    /// Operator acknowledged a failed mission.
    Acknowledge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("event {event:?} is not accepted in state {state:?}")]
pub struct IllegalTransition {
    pub state: MissionState,
    pub event: MissionEvent,
}

impl MissionState {
    pub fn name(self) -> &'static str {
        match self {
            MissionState::Grounded => "grounded",
            MissionState::Ascending => "ascending",
            MissionState::StandbyHover => "standby_hover",
            MissionState::Planning => "planning",
            MissionState::Executing { .. } => "executing",
            MissionState::Replanning => "replanning",
            MissionState::Returning => "returning",
            MissionState::MissionFailed => "mission_failed",
        }
    }

    /// Flight mode the onboard tier should be in for this mission state.
    pub fn uav_mode(self) -> UavMode {
        match self {
            MissionState::Grounded => UavMode::Grounded,
            MissionState::Ascending => UavMode::Ascending,
            MissionState::Executing { .. } => UavMode::Executing,
            MissionState::Returning => UavMode::Returning,
            MissionState::StandbyHover
            | MissionState::Planning
            | MissionState::Replanning
            | MissionState::MissionFailed => UavMode::StandbyHover,
        }
    }

    pub fn accepts_command(self) -> bool {
        self == MissionState::StandbyHover
    }
}

/// The transition table. Any pair not listed is rejected.
pub fn transition(state: MissionState, event: MissionEvent) -> Result<MissionState, IllegalTransition> {
    use MissionEvent as E;
    use MissionState as S;
    let next = match (state, event) {
        (S::Grounded, E::Launch) => S::Ascending,
        (S::Ascending, E::HoverReached) => S::StandbyHover,
        (S::StandbyHover, E::Command) => S::Planning,
        (S::Planning | S::Replanning, E::PlanAccepted) => S::Executing { step: 0 },
        (S::Planning | S::Replanning, E::PlanningFailed) => S::Replanning,
        (S::Executing { .. }, E::StepStarted(step)) => S::Executing { step },
        (S::Executing { .. }, E::StepFailed) => S::Replanning,
        (S::Executing { .. }, E::PlanSucceeded | E::Abort) => S::Returning,
        (S::Replanning, E::AttemptsExhausted) => S::MissionFailed,
        (S::Returning, E::ReturnComplete) => S::StandbyHover,
        (S::MissionFailed, E::Acknowledge | E::Abort) => S::StandbyHover,
        _ => return Err(IllegalTransition { state, event }),
    };
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lifecycle_happy_path() {
        let mut s = MissionState::Grounded;
        for e in [
            MissionEvent::Launch,
            MissionEvent::HoverReached,
            MissionEvent::Command,
            MissionEvent::PlanAccepted,
            MissionEvent::StepStarted(1),
            MissionEvent::PlanSucceeded,
            MissionEvent::ReturnComplete,
        ] {
            s = transition(s, e).unwrap();
        }
        assert_eq!(s, MissionState::StandbyHover);
    }

    #[test]
    fn abort_while_executing_returns() {
        assert_eq!(transition(MissionState::Executing { step: 2 }, MissionEvent::Abort), Ok(MissionState::Returning));
        assert!(transition(MissionState::Planning, MissionEvent::Abort).is_err());
    }

    #[test]
    fn serializes_with_state_tag() {
        let j = serde_json::to_string(&MissionState::Executing { step: 1 }).unwrap();
        assert_eq!(j, r#"{"state":"executing","step":1}"#);
        assert_eq!(serde_json::to_string(&MissionState::StandbyHover).unwrap(), r#"{"state":"standby_hover"}"#);
    }
}
