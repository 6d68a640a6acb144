//! Short-range navigation: ground an instruction to a pixel, back-project it
//! through depth and the camera model, and derive a standoff goal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::CameraModel;
use crate::text;
use crate::world::{UavState, ViewFrame, VisibleObject};
use crate::Vec3;

pub const DEFAULT_STANDOFF: f64 = 2.0;
pub const DEFAULT_Z_MIN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelSource {
    GroundingBackend,
    UserClick,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelTarget {
    pub u: f64,
    pub v: f64,
    pub confidence: f64,
    pub source: PixelSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ObjectNavError {
    #[error("no object in view matches the instruction")]
    NoTarget,
    #[error("grounding backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("no valid depth at the target pixel")]
    InvalidDepth,
    #[error("frame has no pixels")]
    EmptyFrame,
}

/// Annotation shape shared with remote grounding / QA backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: String,
    pub tags: Vec<String>,
    pub bbox: [f64; 4],
    pub depth: f64,
}

impl From<&VisibleObject> for Annotation {
    fn from(o: &VisibleObject) -> Self {
        Self { id: o.object_id.clone(), tags: o.tags().map(str::to_string).collect(), bbox: o.pixel_bbox, depth: o.centroid_depth }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingRequest {
    pub instruction: String,
    pub objects: Vec<Annotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroundingResponse {
    Point { u: f64, v: f64, confidence: f64 },
    None { none: bool },
}

/// Maps an instruction to a pixel in the current view.
pub trait GroundingBackend {
    /// `Ok(None)` when nothing in view matches.
    fn ground(&self, instruction: &str, frame: &ViewFrame) -> Result<Option<PixelTarget>, ObjectNavError>;
}

/// Tag-overlap matcher over the frame's annotations.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockGrounding;

/// Visible object sharing the most content tokens with `instruction`; ties go
/// to the larger bbox, then the smaller id. `None` when nothing overlaps.
pub fn match_object<'a>(instruction: &str, objects: &'a [VisibleObject]) -> Option<&'a VisibleObject> {
    let q = text::content_tokens(instruction);
    objects
        .iter()
        .map(|o| (text::overlap(&q, o.tags()), o))
        .filter(|(s, _)| *s > 0)
        .max_by(|(sa, a), (sb, b)| {
            sa.cmp(sb)
                .then_with(|| a.bbox_area().total_cmp(&b.bbox_area()))
                .then_with(|| b.object_id.cmp(&a.object_id))
        })
        .map(|(_, o)| o)
}

/// Pixel clamped into `[0, width) × [0, height)`.
fn clamp_pixel(u: f64, v: f64, width: u32, height: u32) -> (f64, f64) {
    let max_u = (width as f64 - 1e-6).max(0.0);
    let max_v = (height as f64 - 1e-6).max(0.0);
    (u.clamp(0.0, max_u), v.clamp(0.0, max_v))
}

impl GroundingBackend for MockGrounding {
    fn ground(&self, instruction: &str, frame: &ViewFrame) -> Result<Option<PixelTarget>, ObjectNavError> {
        Ok(match_object(instruction, &frame.objects).map(|o| {
            let (u, v) = o.bbox_center();
            let (u, v) = clamp_pixel(u, v, frame.width, frame.height);
            PixelTarget { u, v, confidence: 1.0, source: PixelSource::GroundingBackend }
        }))
    }
}

pub fn ground_target(instruction: &str, frame: &ViewFrame, backend: &dyn GroundingBackend) -> Result<PixelTarget, ObjectNavError> {
    if frame.width == 0 || frame.height == 0 {
        return Err(ObjectNavError::EmptyFrame);
    }
    let t = backend.ground(instruction, frame)?.ok_or(ObjectNavError::NoTarget)?;
    if !(t.u >= 0.0 && t.v >= 0.0 && t.u < frame.width as f64 && t.v < frame.height as f64) {
        return Err(ObjectNavError::NoTarget);
    }
    Ok(t)
}

/// Median of the finite depths in the 3×3 window around `(u, v)` (window
/// clipped to the image). Even counts average the two middle values.
pub fn window_depth(frame: &ViewFrame, u: f64, v: f64) -> Result<f64, ObjectNavError> {
    let (cu, cv) = (u.floor() as i64, v.floor() as i64);
    let mut vals = vec![];
    for dv in -1..=1 {
        for du in -1..=1 {
            let (x, y) = (cu + du, cv + dv);
            if x >= 0 && y >= 0 && x < frame.width as i64 && y < frame.height as i64 {
                let d = frame.depth_at(x as usize, y as usize);
                if d.is_finite() && d > 0.0 {
                    vals.push(d);
                }
            }
        }
    }
    median(&mut vals).ok_or(ObjectNavError::InvalidDepth)
}

fn median(vals: &mut [f64]) -> Option<f64> {
    if vals.is_empty() {
        return None;
    }
    vals.sort_by(f64::total_cmp);
    let n = vals.len();
    Some(if n % 2 == 1 { vals[n / 2] } else { (vals[n / 2 - 1] + vals[n / 2]) / 2.0 })
}

/// Back-projects a pixel at z-depth `depth` to a world point.
pub fn pixel_to_world(p: &PixelTarget, depth: f64, camera: &CameraModel, uav: &UavState) -> Result<Vec3, ObjectNavError> {
    if !(depth.is_finite() && depth > 0.0) {
        return Err(ObjectNavError::InvalidDepth);
    }
    Ok(camera.unproject(&uav.pose(), p.u, p.v, depth))
}

/// Spatial relation named in an object-navigation instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    /// Stop short of the object on the UAV's side (also the default).
    Ahead,
    /// Pass the object and stop on its far side.
    Behind,
    Above,
}

impl Relation {
    pub fn parse(instruction: &str) -> Self {
        let toks = text::tokenize(instruction);
        if toks.iter().any(|t| t == "behind") {
            Relation::Behind
        } else if toks.iter().any(|t| t == "above" || t == "over") {
            Relation::Above
        } else {
            Relation::Ahead
        }
    }
}

/// Places the goal relative to the back-projected `target`.
///
/// `Ahead` pulls it toward the UAV by `standoff` along the horizontal line of
/// sight (never past the UAV), `Behind` pushes it away by `standoff`, `Above`
/// raises it by `standoff`. The result is lifted to at least `z_min`.
pub fn standoff_goal(target: &Vec3, uav: &Vec3, relation: Relation, standoff: f64, z_min: f64) -> Vec3 {
    let los = Vec3::new(target.x - uav.x, target.y - uav.y, 0.0);
    let dist = los.norm();
    let dir = if dist > 1e-9 { los / dist } else { Vec3::zeros() };
    let mut goal = match relation {
        Relation::Ahead => target - dir * standoff.min(dist),
        Relation::Behind => target + dir * standoff,
        Relation::Above => target + Vec3::new(0.0, 0.0, standoff),
    };
    goal.z = goal.z.max(z_min);
    goal
}

/// Grounds `instruction`, reads the 3×3 median depth at the pixel,
/// back-projects it and applies the relation's standoff.
pub fn object_nav_goal(
    instruction: &str,
    frame: &ViewFrame,
    camera: &CameraModel,
    uav: &UavState,
    standoff: f64,
    z_min: f64,
    backend: &dyn GroundingBackend,
) -> Result<Vec3, ObjectNavError> {
    let target = ground_target(instruction, frame, backend)?;
    let depth = window_depth(frame, target.u, target.v)?;
    let point = pixel_to_world(&target, depth, camera, uav)?;
    Ok(standoff_goal(&point, &uav.position, Relation::parse(instruction), standoff.max(0.0), z_min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Extrinsic;
    use crate::world::UavMode;

    fn obj(id: &str, tag: &str, bbox: [f64; 4]) -> VisibleObject {
        VisibleObject { object_id: id.into(), class_tag: tag.into(), landmark_tags: vec![], pixel_bbox: bbox, centroid_depth: 5.0 }
    }

    fn frame(objects: Vec<VisibleObject>) -> ViewFrame {
        ViewFrame {
            width: 320,
            height: 240,
            depth: vec![f64::INFINITY; 320 * 240],
            objects,
            pose_at_capture: uav(),
        }
    }

    fn uav() -> UavState {
        UavState { position: Vec3::zeros(), velocity: Vec3::zeros(), yaw: 0.0, mode: UavMode::StandbyHover }
    }

    fn identity_cam() -> CameraModel {
        CameraModel { fx: 160.0, fy: 160.0, cx: 160.0, cy: 120.0, width: 320, height: 240, extrinsic: Extrinsic::identity() }
    }

    #[test]
    fn grounds_tree_to_bbox_center() {
        let f = frame(vec![obj("t1", "tree", [100.0, 80.0, 140.0, 160.0])]);
        let t = ground_target("fly ahead of the tree", &f, &MockGrounding).unwrap();
        assert_eq!((t.u, t.v), (120.0, 120.0));
    }

    #[test]
    fn no_matching_tag_is_no_target() {
        let f = frame(vec![obj("b", "bench", [0.0, 0.0, 10.0, 10.0])]);
        assert_eq!(ground_target("fly ahead of the tree", &f, &MockGrounding), Err(ObjectNavError::NoTarget));
    }

    #[test]
    fn larger_bbox_wins_tag_tie() {
        // 30×40 = 1200 vs 20×40 = 800.
        let f = frame(vec![obj("a", "tree", [0.0, 0.0, 20.0, 40.0]), obj("b", "tree", [200.0, 100.0, 230.0, 140.0])]);
        let t = ground_target("the tree", &f, &MockGrounding).unwrap();
        assert_eq!((t.u, t.v), (215.0, 120.0));
    }

    #[test]
    fn principal_ray_back_projects_forward() {
        let t = PixelTarget { u: 160.0, v: 120.0, confidence: 1.0, source: PixelSource::UserClick };
        let p = pixel_to_world(&t, 5.0, &identity_cam(), &uav()).unwrap();
        // Identity extrinsic: camera +z is body +z.
        assert!((p - Vec3::new(0.0, 0.0, 5.0)).norm() < 1e-12);
        assert_eq!(pixel_to_world(&t, f64::INFINITY, &identity_cam(), &uav()), Err(ObjectNavError::InvalidDepth));
        assert_eq!(pixel_to_world(&t, 0.0, &identity_cam(), &uav()), Err(ObjectNavError::InvalidDepth));
    }

    #[test]
    fn median_window_ignores_sky() {
        let mut f = frame(vec![]);
        f.depth[120 * 320 + 159] = 4.9;
        f.depth[120 * 320 + 160] = 5.0;
        f.depth[120 * 320 + 161] = 5.1;
        assert_eq!(window_depth(&f, 160.0, 120.0), Ok(5.0));
        assert_eq!(window_depth(&f, 10.0, 10.0), Err(ObjectNavError::InvalidDepth));
    }

    #[test]
    fn standoff_pulls_goal_back() {
        let target = Vec3::new(10.0, 0.0, 3.0);
        let g = standoff_goal(&target, &Vec3::new(0.0, 0.0, 3.0), Relation::Ahead, 2.0, 1.0);
        assert!((g - Vec3::new(8.0, 0.0, 3.0)).norm() < 1e-12);
        let g0 = standoff_goal(&target, &Vec3::zeros(), Relation::Ahead, 0.0, 1.0);
        assert_eq!(g0, target);
        let low = standoff_goal(&Vec3::new(5.0, 0.0, 0.2), &Vec3::zeros(), Relation::Ahead, 0.0, 1.0);
        assert_eq!(low.z, 1.0);
        let behind = standoff_goal(&target, &Vec3::zeros(), Relation::Behind, 2.0, 1.0);
        assert!((behind - Vec3::new(12.0, 0.0, 3.0)).norm() < 1e-12);
    }

    #[test]
    fn relation_words() {
        assert_eq!(Relation::parse("fly behind the tree"), Relation::Behind);
        assert_eq!(Relation::parse("fly above the bench"), Relation::Above);
        assert_eq!(Relation::parse("fly ahead of the tree"), Relation::Ahead);
    }

    #[test]
    fn grounding_response_shapes() {
        let p: GroundingResponse = serde_json::from_str(r#"{"u":1,"v":2,"confidence":0.5}"#).unwrap();
        assert_eq!(p, GroundingResponse::Point { u: 1.0, v: 2.0, confidence: 0.5 });
        let n: GroundingResponse = serde_json::from_str(r#"{"none":true}"#).unwrap();
        assert_eq!(n, GroundingResponse::None { none: true });
    }
}
