use serde::{Deserialize, Serialize};

use super::SkillError;
use crate::camera::CameraModel;
use crate::world::{wrap_angle, Pedestrian, UavState, World};
use crate::Vec3;

/// People farther than this (horizontal meters) are not detected.
pub const DETECTION_RANGE: f64 = 30.0;
/// Acceptable horizontal distance to a framed person.
pub const FRAMING_RANGE: (f64, f64) = (3.0, 8.0);
/// Distance kept from obstacles by gesture nudges.
pub const GESTURE_CLEARANCE: f64 = 0.5;
const CENTER_TOLERANCE_PX: f64 = 5.0;
const MAX_GESTURE_STEP: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
    Forward,
    Backward,
}

impl Direction {
    pub const ALL: [Direction; 6] =
        [Direction::Up, Direction::Down, Direction::Left, Direction::Right, Direction::Forward, Direction::Backward];

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.as_str() == s)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }

    /// Unit vector in the body frame, with "forward" being the camera axis
    /// projected onto the horizontal plane.
    pub fn body_unit(self, camera: &CameraModel) -> Vec3 {
        let fwd = camera.horizontal_forward_body();
        let left = Vec3::z().cross(&fwd);
        match self {
            Direction::Up => Vec3::z(),
            Direction::Down => -Vec3::z(),
            Direction::Forward => fwd,
            Direction::Backward => -fwd,
            Direction::Left => left,
            Direction::Right => -left,
        }
    }
}

/// Adjustment that frames the nearest person.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Framing {
    pub pedestrian_id: String,
    pub yaw_delta: f64,
    pub target_yaw: f64,
    /// Horizontal move that brings the person into framing range.
    pub position_delta: Vec3,
    pub goal: Vec3,
}

fn centroid(feet: &Vec3) -> Vec3 {
    feet + Vec3::new(0.0, 0.0, Pedestrian::BODY_SIZE[2] / 2.0)
}

/// Turns toward the nearest detected person and moves into framing range.
///
/// No yaw change is requested when the person's centroid already projects
/// within 5 px of the principal point horizontally.
pub fn frame_human(world: &World, uav: &UavState, camera: &CameraModel) -> Result<Framing, SkillError> {
    let horizontal = |p: &Vec3| Vec3::new(p.x - uav.position.x, p.y - uav.position.y, 0.0);
    let (ped, feet) = world
        .scene
        .pedestrians
        .iter()
        .zip(&world.pedestrian_positions)
        .filter(|(_, p)| horizontal(p).norm() <= DETECTION_RANGE)
        .min_by(|(a, pa), (b, pb)| horizontal(pa).norm().total_cmp(&horizontal(pb).norm()).then_with(|| a.id.cmp(&b.id)))
        .ok_or(SkillError::NoHumanVisible)?;
    let c = centroid(feet);
    let centered = camera
        .project(&uav.pose(), &c)
        .is_some_and(|(u, _, _)| (u - camera.cx).abs() <= CENTER_TOLERANCE_PX);
    let h = horizontal(&c);
    let dist = h.norm();
    let (yaw_delta, target_yaw) = if centered || dist < 1e-9 {
        (0.0, uav.yaw)
    } else {
        let fwd = camera.horizontal_forward_body();
        let target = wrap_angle(h.y.atan2(h.x) - fwd.y.atan2(fwd.x));
        (wrap_angle(target - uav.yaw), target)
    };
    let range = dist.clamp(FRAMING_RANGE.0, FRAMING_RANGE.1);
    let position_delta = if dist > 1e-9 { h / dist * (dist - range) } else { Vec3::zeros() };
    Ok(Framing {
        pedestrian_id: ped.id.clone(),
        yaw_delta,
        target_yaw,
        position_delta,
        goal: uav.position + position_delta,
    })
}

/// World-frame displacement for one gesture nudge of `step` meters
/// (clamped to (0, 2]), shortened so the UAV stays `GESTURE_CLEARANCE` from
/// whatever the raycast hits along the way.
pub fn gesture_offset(dir: Direction, step: f64, world: &World, uav: &UavState, camera: &CameraModel) -> Vec3 {
    if !(step > 0.0) {
        return Vec3::zeros();
    }
    let step = step.min(MAX_GESTURE_STEP);
    let d = uav.pose().body_dir_to_world(&dir.body_unit(camera));
    let allowed = world
        .raycast(&uav.position, &d, step + GESTURE_CLEARANCE)
        .map_or(step, |t| (t - GESTURE_CLEARANCE).clamp(0.0, step));
    d * allowed
}
