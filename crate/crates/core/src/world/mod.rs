//! Deterministic simulated campus: terrain, landmarks, occupancy grids,
//! pedestrians, UAV kinematics and synthetic depth/annotation rendering.

mod grid;
mod render;
mod scenario;

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use grid::{CellCrossing, GridGeometry, GridKind, Heightmap, OccupancyGrid, Terrain};
pub use render::{depth_at, render_objects, render_view, ViewFrame, VisibleObject};
pub use scenario::{load_scenario, parse_scenario, Scenario, ScenarioError};

use crate::camera::{CameraModel, Pose};
use crate::knowledge::KnowledgeEntry;
use crate::Vec3;

/// Canonical tick length (10 Hz).
pub const TICK_DT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
}

impl GeoPoint {
    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
            && self.alt.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkNode {
    pub id: String,
    pub name: String,
    pub gps: GeoPoint,
    pub orientation_tag: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub aliases: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UavMode {
    Grounded,
    Ascending,
    StandbyHover,
    Executing,
    Returning,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub yaw: f64,
    pub mode: UavMode,
}

impl UavState {
    pub fn pose(&self) -> Pose {
        Pose { position: self.position, yaw: self.yaw }
    }
}

/// A walker cycling a closed polyline at constant speed.
#[derive(Debug, Clone, PartialEq)]
pub struct Pedestrian {
    pub id: String,
    pub path: Vec<Vec3>,
    pub speed: f64,
    pub is_user: bool,
}

impl Pedestrian {
    pub const MAX_SPEED: f64 = 2.0;
    pub const BODY_SIZE: [f64; 3] = [0.6, 0.6, 1.8];

    /// Feet position after `time` seconds of walking from `path[0]`.
    pub fn position_at(&self, time: f64) -> Vec3 {
        let n = self.path.len();
        if n < 2 || self.speed <= 0.0 {
            return self.path[0];
        }
        let seg_len = |i: usize| (self.path[(i + 1) % n] - self.path[i]).norm();
        let perimeter: f64 = (0..n).map(seg_len).sum();
        if perimeter <= 0.0 {
            return self.path[0];
        }
        let mut s = (self.speed * time).rem_euclid(perimeter);
        for i in 0..n {
            let len = seg_len(i);
            if s <= len && len > 0.0 {
                let a = self.path[i];
                return a + (self.path[(i + 1) % n] - a) * (s / len);
            }
            s -= len;
        }
        self.path[0]
    }
}

/// Static axis-aligned box in the scene (buildings, trees, courts).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: String,
    pub class_tag: String,
    /// Ids of the landmark nodes this object belongs to.
    #[serde(default)]
    pub landmark_tags: Vec<String>,
    pub center: Vec3,
    pub size: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub v_max: f64,
    pub a_max: f64,
    #[serde(default = "Limits::default_yaw_rate_max")]
    pub yaw_rate_max: f64,
}

impl Limits {
    fn default_yaw_rate_max() -> f64 {
        PI / 2.0
    }
}

/// Everything in the scenario that does not change while the world runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub seed: u64,
    pub reference: GeoPoint,
    pub grids: Vec<OccupancyGrid>,
    pub terrain: Terrain,
    pub landmarks: Vec<LandmarkNode>,
    pub objects: Vec<SceneObject>,
    pub pedestrians: Vec<Pedestrian>,
    pub uav_start: UavState,
    pub camera: CameraModel,
    pub limits: Limits,
    pub cruise_altitude: f64,
    pub hover_altitude: f64,
    pub knowledge: Vec<KnowledgeEntry>,
}

impl Scene {
    pub fn grid(&self, kind: GridKind) -> Option<&OccupancyGrid> {
        self.grids.iter().find(|g| g.kind == kind)
    }

    pub fn grid_mut(&mut self, kind: GridKind) -> Option<&mut OccupancyGrid> {
        self.grids.iter_mut().find(|g| g.kind == kind)
    }

    pub fn user(&self) -> &Pedestrian {
        self.pedestrians.iter().find(|p| p.is_user).expect("validated: one user")
    }
}

/// Controller output applied for one tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Accel(Vec3),
    VelocitySetpoint(Vec3),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub command: Command,
    /// Counter-clockwise yaw rate, rad/s.
    #[serde(default)]
    pub yaw_rate: f64,
}

impl Control {
    pub fn velocity(v: Vec3, yaw_rate: f64) -> Self {
        Self { command: Command::VelocitySetpoint(v), yaw_rate }
    }

    pub fn hold() -> Self {
        Self::velocity(Vec3::zeros(), 0.0)
    }
}

/// The live simulation. Static content sits behind an `Arc`, so clones are
/// cheap immutable snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub scene: Arc<Scene>,
    pub uav: UavState,
    pub pedestrian_positions: Vec<Vec3>,
    pub time: f64,
    pub tick: u64,
}

pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

fn clamp_norm(v: Vec3, max: f64) -> Vec3 {
    let n = v.norm();
    if n > max {
        v * (max / n)
    } else {
        v
    }
}

impl World {
    pub fn new(scene: Scene) -> Self {
        let pedestrian_positions = scene.pedestrians.iter().map(|p| p.position_at(0.0)).collect();
        Self {
            uav: scene.uav_start,
            scene: Arc::new(scene),
            pedestrian_positions,
            time: 0.0,
            tick: 0,
        }
    }

    pub fn scene_mut(&mut self) -> &mut Scene {
        Arc::make_mut(&mut self.scene)
    }

    pub fn grid(&self, kind: GridKind) -> Option<&OccupancyGrid> {
        self.scene.grid(kind)
    }

    pub fn user_position(&self) -> Vec3 {
        let i = self.scene.pedestrians.iter().position(|p| p.is_user).expect("validated");
        self.pedestrian_positions[i]
    }

    /// Moves pedestrians to where they are at simulation time `time`.
    pub fn set_time(&mut self, time: f64, tick: u64) {
        self.time = time;
        self.tick = tick;
        for (pos, ped) in self.pedestrian_positions.iter_mut().zip(&self.scene.pedestrians) {
            *pos = ped.position_at(time);
        }
    }

    /// Advances the world by `dt` seconds under `control`.
    ///
    /// First-order kinematics: the velocity moves toward the setpoint by at
    /// most `a_max * dt`, is clamped to `v_max`, then integrates position
    /// (semi-implicit Euler). Altitude never drops below the ground plane.
    pub fn step(&mut self, control: &Control, dt: f64) {
        assert!(dt > 0.0 && dt <= 0.5, "dt out of range: {dt}");
        let limits = self.scene.limits;
        let uav = &mut self.uav;
        let dv = match control.command {
            Command::VelocitySetpoint(sp) => {
                clamp_norm(clamp_norm(sp, limits.v_max) - uav.velocity, limits.a_max * dt)
            }
            Command::Accel(a) => clamp_norm(a, limits.a_max) * dt,
        };
        let mut v = clamp_norm(uav.velocity + dv, limits.v_max);
        let mut p = uav.position + v * dt;
        if p.z < 0.0 {
            p.z = 0.0;
            v.z = v.z.max(0.0);
        }
        uav.velocity = v;
        uav.position = p;
        let yaw_rate = control.yaw_rate.clamp(-limits.yaw_rate_max, limits.yaw_rate_max);
        uav.yaw = wrap_angle(uav.yaw + yaw_rate * dt);
        let (time, tick) = (self.time + dt, self.tick + 1);
        self.set_time(time, tick);
    }

    /// Non-mutating form of [`World::step`].
    pub fn stepped(&self, control: &Control, dt: f64) -> World {
        let mut next = self.clone();
        next.step(control, dt);
        next
    }

    /// Lidar-style range query against occupied cells of the UAV grid and the
    /// terrain. Returns the smallest hit distance in `[0, max_range]`; an
    /// origin already inside an obstacle hits at 0.
    pub fn raycast(&self, origin: &Vec3, dir: &Vec3, max_range: f64) -> Option<f64> {
        debug_assert!((dir.norm() - 1.0).abs() <= 1e-9, "raycast dir must be unit length");
        let grid_hit = self
            .grid(GridKind::UavExploration)
            .and_then(|g| g.first_hit(origin, dir, max_range));
        let terrain_hit = self.scene.terrain.first_hit(origin, dir, max_range);
        match (grid_hit, terrain_hit) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
        .filter(|t| *t <= max_range)
    }

    /// True when the segment `a → b` is not blocked by the grid or terrain.
    pub fn segment_clear(&self, a: &Vec3, b: &Vec3) -> bool {
        let d = b - a;
        let len = d.norm();
        len == 0.0 || self.raycast(a, &(d / len), len).is_none()
    }
}
