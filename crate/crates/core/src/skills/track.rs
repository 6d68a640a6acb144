use std::f64::consts::FRAC_PI_4;

use serde::{Deserialize, Serialize};

use super::SkillError;
use crate::camera::CameraModel;
use crate::objectnav::match_object;
use crate::world::{wrap_angle, Control, UavState, VisibleObject, World};
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackGains {
    /// Yaw-rate gain per unit of normalized horizontal pixel error (1/s).
    pub k_yaw: f64,
    /// Range-closing gain (1/s).
    pub k_pos: f64,
    /// Ticks without a sighting before the target is declared lost.
    pub lost_threshold: u32,
    pub standoff: f64,
}

impl Default for TrackGains {
    fn default() -> Self {
        Self { k_yaw: 1.0, k_pos: 0.8, lost_threshold: 20, standoff: 4.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrackInit<'a> {
    Instruction(&'a str),
    Click { u: f64, v: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackState {
    pub target_id: String,
    pub last_bbox: [f64; 4],
    /// Last estimated world position of the target.
    pub last_position: Vec3,
    pub lost_frames: u32,
    pub standoff: f64,
    #[serde(default)]
    pub reposition_goal: Option<Vec3>,
}

fn estimate_position(o: &VisibleObject, uav: &UavState, camera: &CameraModel) -> Vec3 {
    let (u, v) = o.bbox_center();
    camera.unproject(&uav.pose(), u, v, o.centroid_depth)
}

/// Picks the target by instruction (tag matching) or by click (the smallest
/// bbox containing the pixel, then the smallest id).
pub fn track_init(
    objects: &[VisibleObject],
    uav: &UavState,
    camera: &CameraModel,
    init: TrackInit<'_>,
    standoff: f64,
) -> Result<TrackState, SkillError> {
    let target = match init {
        TrackInit::Instruction(text) => match_object(text, objects),
        TrackInit::Click { u, v } => objects
            .iter()
            .filter(|o| o.bbox_contains(u, v))
            .min_by(|a, b| a.bbox_area().total_cmp(&b.bbox_area()).then_with(|| a.object_id.cmp(&b.object_id))),
    }
    .ok_or(SkillError::NoTarget)?;
    Ok(TrackState {
        target_id: target.object_id.clone(),
        last_bbox: target.pixel_bbox,
        last_position: estimate_position(target, uav, camera),
        lost_frames: 0,
        standoff: standoff.max(f64::EPSILON),
        reposition_goal: None,
    })
}

/// Eight points on the standoff circle around `target` at the UAV's altitude,
/// starting at the UAV's current bearing and stepping 45° counter-clockwise.
pub fn reposition_candidates(target: &Vec3, uav: &Vec3, standoff: f64) -> [Vec3; 8] {
    let bearing = (uav.y - target.y).atan2(uav.x - target.x);
    std::array::from_fn(|k| {
        let a = bearing + k as f64 * FRAC_PI_4;
        Vec3::new(target.x + standoff * a.cos(), target.y + standoff * a.sin(), uav.z)
    })
}

fn horizontal(v: Vec3) -> Vec3 {
    Vec3::new(v.x, v.y, 0.0)
}

fn clamp_norm(v: Vec3, max: f64) -> Vec3 {
    let n = v.norm();
    if n > max {
        v * (max / n)
    } else {
        v
    }
}

/// Yaw rate that turns the camera's horizontal axis toward `point`.
fn yaw_toward(point: &Vec3, uav: &UavState, camera: &CameraModel, k_yaw: f64) -> f64 {
    let h = horizontal(point - uav.position);
    if h.norm() < 1e-9 {
        return 0.0;
    }
    let fwd = camera.horizontal_forward_body();
    let heading = uav.yaw + fwd.y.atan2(fwd.x);
    k_yaw * wrap_angle(h.y.atan2(h.x) - heading)
}

/// One control tick of visual tracking.
///
/// While the target is visible the yaw rate is `-k_yaw·(u − cx)/fx` (the
/// target right of center turns the UAV clockwise) and the horizontal
/// velocity closes the range error to the standoff with gain `k_pos`. When
/// the target is not visible and the line of sight to its last position is
/// blocked, the UAV heads for the first clear point among
/// [`reposition_candidates`].
pub fn track_step(
    state: &TrackState,
    objects: &[VisibleObject],
    uav: &UavState,
    world: &World,
    camera: &CameraModel,
    gains: &TrackGains,
) -> Result<(TrackState, Control), SkillError> {
    let limits = world.scene.limits;
    let mut next = state.clone();
    if let Some(o) = objects.iter().find(|o| o.object_id == state.target_id) {
        let (u, _) = o.bbox_center();
        let yaw_rate = (-gains.k_yaw * (u - camera.cx) / camera.fx).clamp(-limits.yaw_rate_max, limits.yaw_rate_max);
        let p = estimate_position(o, uav, camera);
        let h = horizontal(p - uav.position);
        let range = h.norm();
        let vel = if range > 1e-9 { h / range * (gains.k_pos * (range - state.standoff)) } else { Vec3::zeros() };
        next.lost_frames = 0;
        next.last_bbox = o.pixel_bbox;
        next.last_position = p;
        next.reposition_goal = None;
        return Ok((next, Control::velocity(clamp_norm(vel, limits.v_max), yaw_rate)));
    }

    next.lost_frames += 1;
    if next.lost_frames > gains.lost_threshold {
        return Err(SkillError::TargetLost);
    }
    let target = state.last_position;
    let look = yaw_toward(&target, uav, camera, gains.k_yaw).clamp(-limits.yaw_rate_max, limits.yaw_rate_max);
    let eye = Vec3::new(uav.position.x, uav.position.y, uav.position.z);
    let goal = if world.segment_clear(&eye, &target) {
        None
    } else {
        state.reposition_goal.or_else(|| {
            reposition_candidates(&target, &uav.position, state.standoff).into_iter().find(|c| {
                let free = world
                    .grid(crate::world::GridKind::UavExploration)
                    .is_none_or(|g| g.occupied_at(c) == Some(false));
                free && world.segment_clear(c, &target)
            })
        })
    };
    next.reposition_goal = goal;
    let vel = goal.map_or(Vec3::zeros(), |g| clamp_norm(horizontal(g - uav.position) * gains.k_pos, limits.v_max));
    Ok((next, Control::velocity(vel, look)))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use super::*;
    use crate::camera::Extrinsic;
    use crate::world::{
        render_objects, Command, GeoPoint, GridGeometry, GridKind, Limits, OccupancyGrid, Pedestrian, Scene, Terrain,
        UavMode,
    };

    fn camera() -> CameraModel {
        CameraModel { fx: 100.0, fy: 100.0, cx: 160.0, cy: 120.0, width: 320, height: 240, extrinsic: Extrinsic::forward_looking(0.0) }
    }

    fn uav_at(x: f64, y: f64) -> UavState {
        UavState { position: Vec3::new(x, y, 0.9), velocity: Vec3::zeros(), yaw: 0.0, mode: UavMode::Executing }
    }

    fn world_with_person(p: [f64; 2]) -> World {
        let grid = OccupancyGrid::new(
            GridKind::UavExploration,
            GridGeometry { origin: [-20.0, -20.0], resolution: 1.0, width: 40, height: 40 },
        );
        World::new(Scene {
            seed: 0,
            reference: GeoPoint { lat: 0.0, lon: 0.0, alt: 0.0 },
            grids: vec![grid],
            terrain: Terrain::default(),
            landmarks: vec![],
            objects: vec![],
            pedestrians: vec![Pedestrian { id: "u".into(), path: vec![Vec3::new(p[0], p[1], 0.0)], speed: 0.0, is_user: true }],
            uav_start: uav_at(0.0, 0.0),
            camera: camera(),
            limits: Limits { v_max: 3.0, a_max: 2.0, yaw_rate_max: FRAC_PI_2 },
            cruise_altitude: 5.0,
            hover_altitude: 3.0,
            knowledge: vec![],
        })
    }

    fn obj(id: &str, bbox: [f64; 4], depth: f64) -> VisibleObject {
        VisibleObject { object_id: id.into(), class_tag: "person".into(), landmark_tags: vec![], pixel_bbox: bbox, centroid_depth: depth }
    }

    fn state(last: Vec3) -> TrackState {
        TrackState { target_id: "u".into(), last_bbox: [0.0; 4], last_position: last, lost_frames: 0, standoff: 4.0, reposition_goal: None }
    }

    #[test]
    fn click_selects_smallest_containing_bbox() {
        // 30×30 = 900 and 20×20 = 400, overlapping at (120, 120).
        let objs = [obj("big", [100.0, 100.0, 130.0, 130.0], 5.0), obj("small", [110.0, 110.0, 130.0, 130.0], 5.0)];
        let s = track_init(&objs, &uav_at(0.0, 0.0), &camera(), TrackInit::Click { u: 120.0, v: 120.0 }, 4.0).unwrap();
        assert_eq!(s.target_id, "small");
        assert_eq!(s.lost_frames, 0);
        let miss = track_init(&objs, &uav_at(0.0, 0.0), &camera(), TrackInit::Click { u: 5.0, v: 5.0 }, 4.0);
        assert_eq!(miss, Err(SkillError::NoTarget));
    }

    #[test]
    fn centered_target_at_standoff_gives_zero_command() {
        let w = world_with_person([4.0, 0.0]);
        let objs = [obj("u", [150.0, 110.0, 170.0, 130.0], 4.0)];
        let (_, c) = track_step(&state(Vec3::zeros()), &objs, &uav_at(0.0, 0.0), &w, &camera(), &TrackGains::default()).unwrap();
        assert_eq!(c.yaw_rate, 0.0);
        assert_eq!(c.command, Command::VelocitySetpoint(Vec3::zeros()));
    }

    #[test]
    fn fifty_px_right_gives_half_gain_clockwise() {
        let w = world_with_person([4.0, 0.0]);
        let objs = [obj("u", [200.0, 110.0, 220.0, 130.0], 4.0)];
        let (_, c) = track_step(&state(Vec3::zeros()), &objs, &uav_at(0.0, 0.0), &w, &camera(), &TrackGains::default()).unwrap();
        assert!((c.yaw_rate + 0.5).abs() < 1e-12);
    }

    #[test]
    fn lost_after_threshold() {
        let w = world_with_person([4.0, 0.0]);
        let mut s = state(Vec3::new(4.0, 0.0, 0.9));
        for _ in 0..20 {
            s = track_step(&s, &[], &uav_at(0.0, 0.0), &w, &camera(), &TrackGains::default()).unwrap().0;
        }
        assert_eq!(s.lost_frames, 20);
        assert_eq!(track_step(&s, &[], &uav_at(0.0, 0.0), &w, &camera(), &TrackGains::default()), Err(SkillError::TargetLost));
    }

    #[test]
    fn walled_target_repositions_to_first_clear_candidate() {
        let mut w = world_with_person([6.0, 0.0]);
        // Wall across x ∈ [3, 4], y ∈ [-1, 1]: blocks the current bearing
        // (candidate 0 at (2, 0)) but not +45°.
        w.scene_mut().grids[0].fill_rect([3.0, -1.0], [4.0, 1.0]);
        let target = Vec3::new(6.0, 0.0, 0.9);
        let (s, c) = track_step(&state(target), &[], &uav_at(0.0, 0.0), &w, &camera(), &TrackGains::default()).unwrap();
        let goal = s.reposition_goal.expect("reposition");
        let cands = reposition_candidates(&target, &Vec3::new(0.0, 0.0, 0.9), 4.0);
        assert!(!w.segment_clear(&cands[0], &target));
        assert_eq!(goal, cands[1]);
        assert!(w.segment_clear(&goal, &target));
        assert!(matches!(c.command, Command::VelocitySetpoint(v) if v.norm() > 0.0));
    }

    #[test]
    fn closed_loop_centers_stationary_target() {
        let mut w = world_with_person([6.0, 2.0]);
        let cam = camera();
        let mut uav = uav_at(0.0, 0.0);
        let objs = render_objects(&w, &uav, &cam);
        let mut s = track_init(&objs, &uav, &cam, TrackInit::Instruction("the person"), 4.0).unwrap();
        for _ in 0..50 {
            let objs = render_objects(&w, &uav, &cam);
            let (ns, c) = track_step(&s, &objs, &uav, &w, &cam, &TrackGains::default()).unwrap();
            s = ns;
            w.uav = uav;
            w.step(&c, 0.1);
            uav = w.uav;
        }
        let objs = render_objects(&w, &uav, &cam);
        let o = objs.iter().find(|o| o.object_id == "u").unwrap();
        assert!((o.bbox_center().0 - cam.cx).abs() < 5.0);
    }
}
