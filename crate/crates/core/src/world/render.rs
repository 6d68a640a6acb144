//! Synthetic RGB-D substitute: z-depth raster plus visible-object annotations.

use serde::{Deserialize, Serialize};

use super::{GridKind, Pedestrian, UavState, World};
use crate::camera::{CameraModel, Pose};
use crate::Vec3;

/// Depth rays give up beyond this range (meters).
pub const RENDER_RANGE: f64 = 300.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibleObject {
    pub object_id: String,
    pub class_tag: String,
    pub landmark_tags: Vec<String>,
    /// `(u_min, v_min, u_max, v_max)` in pixels, clipped to the image.
    pub pixel_bbox: [f64; 4],
    pub centroid_depth: f64,
}

impl VisibleObject {
    pub fn bbox_center(&self) -> (f64, f64) {
        let [u0, v0, u1, v1] = self.pixel_bbox;
        ((u0 + u1) / 2.0, (v0 + v1) / 2.0)
    }

    pub fn bbox_area(&self) -> f64 {
        let [u0, v0, u1, v1] = self.pixel_bbox;
        (u1 - u0).max(0.0) * (v1 - v0).max(0.0)
    }

    pub fn bbox_contains(&self, u: f64, v: f64) -> bool {
        let [u0, v0, u1, v1] = self.pixel_bbox;
        u >= u0 && u <= u1 && v >= v0 && v <= v1
    }

    /// Class tag followed by landmark tags.
    pub fn tags(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.class_tag.as_str()).chain(self.landmark_tags.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewFrame {
    pub width: u32,
    pub height: u32,
    /// Row-major z-depth in meters, `+inf` where nothing is hit.
    pub depth: Vec<f64>,
    pub objects: Vec<VisibleObject>,
    pub pose_at_capture: UavState,
}

impl ViewFrame {
    pub fn depth_at(&self, u: usize, v: usize) -> f64 {
        self.depth[v * self.width as usize + u]
    }
}

struct Solid<'a> {
    id: &'a str,
    class_tag: &'a str,
    landmark_tags: &'a [String],
    min: Vec3,
    max: Vec3,
}

impl Solid<'_> {
    fn centroid(&self) -> Vec3 {
        (self.min + self.max) / 2.0
    }

    fn corners(&self) -> [Vec3; 8] {
        let (a, b) = (self.min, self.max);
        [
            Vec3::new(a.x, a.y, a.z),
            Vec3::new(b.x, a.y, a.z),
            Vec3::new(a.x, b.y, a.z),
            Vec3::new(b.x, b.y, a.z),
            Vec3::new(a.x, a.y, b.z),
            Vec3::new(b.x, a.y, b.z),
            Vec3::new(a.x, b.y, b.z),
            Vec3::new(b.x, b.y, b.z),
        ]
    }

    /// Slab-method entry distance; 0 when the origin is inside.
    fn ray_entry(&self, o: &Vec3, d: &Vec3, max_t: f64) -> Option<f64> {
        let (mut t0, mut t1) = (0.0_f64, max_t);
        for k in 0..3 {
            if d[k] == 0.0 {
                if o[k] < self.min[k] || o[k] > self.max[k] {
                    return None;
                }
            } else {
                let (mut a, mut b) = ((self.min[k] - o[k]) / d[k], (self.max[k] - o[k]) / d[k]);
                if a > b {
                    std::mem::swap(&mut a, &mut b);
                }
                t0 = t0.max(a);
                t1 = t1.min(b);
                if t0 > t1 {
                    return None;
                }
            }
        }
        Some(t0)
    }
}

const USER_TAG: &str = "user";

fn solids(world: &World) -> Vec<Solid<'_>> {
    static USER_TAGS: std::sync::OnceLock<Vec<String>> = std::sync::OnceLock::new();
    let user_tags = USER_TAGS.get_or_init(|| vec![USER_TAG.to_string()]);
    let mut out: Vec<Solid<'_>> = world
        .scene
        .objects
        .iter()
        .map(|o| Solid {
            id: &o.id,
            class_tag: &o.class_tag,
            landmark_tags: &o.landmark_tags,
            min: o.center - o.size / 2.0,
            max: o.center + o.size / 2.0,
        })
        .collect();
    let [sx, sy, sz] = Pedestrian::BODY_SIZE;
    for (ped, pos) in world.scene.pedestrians.iter().zip(&world.pedestrian_positions) {
        out.push(Solid {
            id: &ped.id,
            class_tag: "person",
            landmark_tags: if ped.is_user { user_tags } else { &[] },
            min: Vec3::new(pos.x - sx / 2.0, pos.y - sy / 2.0, pos.z),
            max: Vec3::new(pos.x + sx / 2.0, pos.y + sy / 2.0, pos.z + sz),
        });
    }
    out
}

/// Nearest hit along a ray among solids, grid walls (extruded) and terrain.
fn nearest_hit(world: &World, solids: &[Solid<'_>], o: &Vec3, d: &Vec3, max_t: f64) -> Option<f64> {
    let mut best = world.raycast(o, d, max_t);
    for s in solids {
        if let Some(t) = s.ray_entry(o, d, best.unwrap_or(max_t)) {
            best = Some(best.map_or(t, |b| b.min(t)));
        }
    }
    best
}

fn annotate(world: &World, solids: &[Solid<'_>], pose: &Pose, camera: &CameraModel) -> Vec<VisibleObject> {
    let center = camera.center_world(pose);
    let forward = camera.forward_world(pose);
    let grid_tol = world
        .grid(GridKind::UavExploration)
        .map_or(0.0, |g| g.resolution() * std::f64::consts::SQRT_2);
    let mut visible = Vec::new();
    for (i, s) in solids.iter().enumerate() {
        let c = s.centroid();
        let Some((u, v, _)) = camera.project(pose, &c) else { continue };
        if !camera.contains_pixel(u, v) {
            continue;
        }
        let to_c = c - center;
        let dist = to_c.norm();
        if dist == 0.0 {
            continue;
        }
        let dir = to_c / dist;
        let Some(t_obj) = s.ray_entry(&center, &dir, dist) else { continue };
        if t_obj <= 0.0 {
            continue;
        }
        let occluded_by_solid = solids
            .iter()
            .enumerate()
            .any(|(j, o)| j != i && o.ray_entry(&center, &dir, t_obj).is_some_and(|t| t < t_obj - 1e-9));
        let occluded_by_grid = world
            .grid(GridKind::UavExploration)
            .and_then(|g| g.first_hit(&center, &dir, t_obj))
            .is_some_and(|t| t < t_obj - grid_tol);
        let occluded_by_ground = world
            .scene
            .terrain
            .first_hit(&center, &dir, t_obj)
            .is_some_and(|t| t < t_obj - 1e-9);
        if occluded_by_solid || occluded_by_grid || occluded_by_ground {
            continue;
        }
        let centroid_depth = t_obj * dir.dot(&forward);
        if !(centroid_depth > 0.0) {
            continue;
        }
        visible.push(VisibleObject {
            object_id: s.id.to_string(),
            class_tag: s.class_tag.to_string(),
            landmark_tags: s.landmark_tags.to_vec(),
            pixel_bbox: project_bbox(camera, pose, s),
            centroid_depth,
        });
    }
    visible
}

fn project_bbox(camera: &CameraModel, pose: &Pose, s: &Solid<'_>) -> [f64; 4] {
    const NEAR: f64 = 0.05;
    let (w, h) = (camera.width as f64, camera.height as f64);
    let mut bb = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for corner in s.corners() {
        let pc = camera.world_to_camera(pose, &corner);
        if pc.z <= NEAR {
            // Box straddles the camera plane: it fills the view on that side.
            return [0.0, 0.0, w, h];
        }
        let (u, v, _) = camera.project_camera(&pc).expect("z > 0");
        bb = [bb[0].min(u), bb[1].min(v), bb[2].max(u), bb[3].max(v)];
    }
    [bb[0].clamp(0.0, w), bb[1].clamp(0.0, h), bb[2].clamp(0.0, w), bb[3].clamp(0.0, h)]
}

/// Annotations only (no depth raster); what the onboard tier publishes every tick.
pub fn render_objects(world: &World, pose: &UavState, camera: &CameraModel) -> Vec<VisibleObject> {
    annotate(world, &solids(world), &pose.pose(), camera)
}

/// Z-depth along the ray through pixel `(u, v)`; `+inf` for no hit.
pub fn depth_at(world: &World, pose: &UavState, camera: &CameraModel, u: f64, v: f64) -> f64 {
    let solids = solids(world);
    let (o, d, zpt) = camera.pixel_ray(&pose.pose(), u, v);
    nearest_hit(world, &solids, &o, &d, RENDER_RANGE).map_or(f64::INFINITY, |t| t * zpt)
}

/// Full frame: a depth value per pixel (ray through the integer pixel
/// coordinate) and the visible-object list.
pub fn render_view(world: &World, pose: &UavState, camera: &CameraModel) -> ViewFrame {
    let solids = solids(world);
    let p = pose.pose();
    let (w, h) = (camera.width as usize, camera.height as usize);
    let mut depth = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let (o, d, zpt) = camera.pixel_ray(&p, u as f64, v as f64);
            depth.push(nearest_hit(world, &solids, &o, &d, RENDER_RANGE).map_or(f64::INFINITY, |t| t * zpt));
        }
    }
    ViewFrame {
        width: camera.width,
        height: camera.height,
        depth,
        objects: annotate(world, &solids, &p, camera),
        pose_at_capture: *pose,
    }
}
