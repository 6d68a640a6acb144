//! Scenario file schema and loading.
//!
//! Grid cells are accepted either as a base64 bitfield (row-major, most
//! significant bit first within each byte) or as a list of occupied
//! `[row, col]` pairs.

use std::collections::BTreeSet;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    GeoPoint, GridGeometry, GridKind, Heightmap, LandmarkNode, Limits, OccupancyGrid, Pedestrian,
    Scene, SceneObject, Terrain, UavMode, UavState, World,
};
use crate::camera::CameraModel;
use crate::geonav::gps_to_local;
use crate::knowledge::KnowledgeEntry;
use crate::Vec3;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("consistency error: {0}")]
    Consistency(String),
}

fn schema(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Schema(msg.into())
}

fn consistency(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Consistency(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CellsSpec {
    Bitfield(String),
    Pairs(Vec<[usize; 2]>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub kind: GridKind,
    pub origin: [f64; 2],
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    pub cells: CellsSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PedestrianSpec {
    pub id: String,
    pub path: Vec<[f64; 2]>,
    pub speed: f64,
    #[serde(default)]
    pub is_user: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavStartSpec {
    pub position: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightmapSpec {
    pub origin: [f64; 2],
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    pub heights: Vec<f64>,
}

fn default_cruise() -> f64 {
    5.0
}

/// On-disk scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub reference_gps: GeoPoint,
    pub grids: Vec<GridSpec>,
    pub landmarks: Vec<LandmarkNode>,
    pub pedestrians: Vec<PedestrianSpec>,
    pub uav_start: UavStartSpec,
    pub camera: CameraModel,
    pub limits: Limits,
    #[serde(default)]
    pub objects: Vec<SceneObject>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terrain: Option<HeightmapSpec>,
    #[serde(default = "default_cruise")]
    pub cruise_altitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hover_altitude: Option<f64>,
    #[serde(default)]
    pub knowledge: Vec<KnowledgeEntry>,
}

fn decode_cells(spec: &GridSpec) -> Result<Vec<bool>, ScenarioError> {
    let n = spec.width * spec.height;
    match &spec.cells {
        CellsSpec::Bitfield(b64) => {
            let bytes = BASE64
                .decode(b64.trim())
                .map_err(|e| schema(format!("grid {:?}: bad base64 bitfield: {e}", spec.kind)))?;
            if bytes.len() * 8 < n {
                return Err(consistency(format!(
                    "grid {:?}: bitfield holds {} bits, need {n}",
                    spec.kind,
                    bytes.len() * 8
                )));
            }
            Ok((0..n).map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0).collect())
        }
        CellsSpec::Pairs(pairs) => {
            let mut cells = vec![false; n];
            for &[row, col] in pairs {
                if row >= spec.height || col >= spec.width {
                    return Err(consistency(format!(
                        "grid {:?}: occupied cell ({row},{col}) out of bounds",
                        spec.kind
                    )));
                }
                cells[row * spec.width + col] = true;
            }
            Ok(cells)
        }
    }
}

pub fn encode_bitfield(cells: &[bool]) -> String {
    let mut bytes = vec![0u8; cells.len().div_ceil(8)];
    for (i, _) in cells.iter().enumerate().filter(|(_, c)| **c) {
        bytes[i / 8] |= 0x80 >> (i % 8);
    }
    BASE64.encode(bytes)
}

impl Scenario {
    pub fn into_world(self) -> Result<World, ScenarioError> {
        if !self.reference_gps.is_valid() {
            return Err(consistency("reference_gps out of range"));
        }
        if !(self.limits.v_max > 0.0 && self.limits.a_max > 0.0 && self.limits.yaw_rate_max > 0.0) {
            return Err(consistency("limits must be positive"));
        }
        self.camera.validate().map_err(|e| consistency(format!("camera: {e}")))?;

        let mut grids: Vec<OccupancyGrid> = Vec::new();
        for spec in &self.grids {
            if !(spec.resolution > 0.0) {
                return Err(consistency(format!("grid {:?}: resolution must be > 0", spec.kind)));
            }
            if grids.iter().any(|g| g.kind == spec.kind) {
                return Err(consistency(format!("duplicate grid kind {:?}", spec.kind)));
            }
            let geometry = GridGeometry {
                origin: spec.origin,
                resolution: spec.resolution,
                width: spec.width,
                height: spec.height,
            };
            grids.push(OccupancyGrid { kind: spec.kind, geometry, cells: decode_cells(spec)? });
        }

        let mut ids = BTreeSet::new();
        for lm in &self.landmarks {
            if lm.name.trim().is_empty() {
                return Err(consistency(format!("landmark {} has an empty name", lm.id)));
            }
            if !ids.insert(lm.id.as_str()) {
                return Err(consistency(format!("duplicate landmark id {}", lm.id)));
            }
            if !lm.gps.is_valid() {
                return Err(consistency(format!("landmark {}: GPS out of range", lm.id)));
            }
            let local = gps_to_local(&self.reference_gps, &lm.gps)
                .map_err(|e| consistency(format!("landmark {}: {e}", lm.id)))?;
            if !grids.iter().any(|g| g.geometry.cell_of(&local).is_some()) {
                return Err(consistency(format!("landmark {} lies outside every grid", lm.id)));
            }
        }

        let users = self.pedestrians.iter().filter(|p| p.is_user).count();
        if users != 1 {
            return Err(consistency(format!("expected exactly one user pedestrian, found {users}")));
        }
        let mut pedestrians = Vec::with_capacity(self.pedestrians.len());
        for p in &self.pedestrians {
            if p.path.is_empty() {
                return Err(consistency(format!("pedestrian {} has an empty path", p.id)));
            }
            if !(p.speed >= 0.0 && p.speed <= Pedestrian::MAX_SPEED) {
                return Err(consistency(format!("pedestrian {} speed {} exceeds limits", p.id, p.speed)));
            }
            pedestrians.push(Pedestrian {
                id: p.id.clone(),
                path: p.path.iter().map(|[x, y]| Vec3::new(*x, *y, 0.0)).collect(),
                speed: p.speed,
                is_user: p.is_user,
            });
        }

        for o in &self.objects {
            if o.size.iter().any(|s| !(*s > 0.0)) {
                return Err(consistency(format!("object {} must have positive size", o.id)));
            }
        }

        let terrain = match self.terrain {
            None => Terrain::default(),
            Some(h) => {
                if h.heights.len() != h.width * h.height || !(h.resolution > 0.0) {
                    return Err(consistency("terrain heightmap dimensions mismatch"));
                }
                Terrain {
                    heightmap: Some(Heightmap {
                        geometry: GridGeometry {
                            origin: h.origin,
                            resolution: h.resolution,
                            width: h.width,
                            height: h.height,
                        },
                        heights: h.heights,
                    }),
                }
            }
        };

        let mut entry_ids = BTreeSet::new();
        for e in &self.knowledge {
            if e.text.trim().is_empty() || !entry_ids.insert(e.id.as_str()) {
                return Err(consistency(format!("knowledge entry {} invalid or duplicated", e.id)));
            }
        }

        let [x, y, z] = self.uav_start.position;
        if z < 0.0 {
            return Err(consistency("uav_start below ground"));
        }
        let uav_start = UavState {
            position: Vec3::new(x, y, z),
            velocity: Vec3::zeros(),
            yaw: self.uav_start.yaw,
            mode: UavMode::Grounded,
        };
        let scene = Scene {
            seed: self.seed,
            reference: self.reference_gps,
            grids,
            terrain,
            landmarks: self.landmarks,
            objects: self.objects,
            pedestrians,
            uav_start,
            camera: self.camera,
            limits: self.limits,
            cruise_altitude: self.cruise_altitude,
            hover_altitude: self.hover_altitude.unwrap_or(self.cruise_altitude),
            knowledge: self.knowledge,
        };
        Ok(World::new(scene))
    }

    /// Re-serializable scenario for a scene (grids encoded as bitfields).
    pub fn from_scene(scene: &Scene) -> Self {
        Self {
            seed: scene.seed,
            reference_gps: scene.reference,
            grids: scene
                .grids
                .iter()
                .map(|g| GridSpec {
                    kind: g.kind,
                    origin: g.geometry.origin,
                    resolution: g.geometry.resolution,
                    width: g.geometry.width,
                    height: g.geometry.height,
                    cells: CellsSpec::Bitfield(encode_bitfield(&g.cells)),
                })
                .collect(),
            landmarks: scene.landmarks.clone(),
            pedestrians: scene
                .pedestrians
                .iter()
                .map(|p| PedestrianSpec {
                    id: p.id.clone(),
                    path: p.path.iter().map(|v| [v.x, v.y]).collect(),
                    speed: p.speed,
                    is_user: p.is_user,
                })
                .collect(),
            uav_start: UavStartSpec {
                position: scene.uav_start.position.into(),
                yaw: scene.uav_start.yaw,
            },
            camera: scene.camera,
            limits: scene.limits,
            objects: scene.objects.clone(),
            terrain: scene.terrain.heightmap.as_ref().map(|h| HeightmapSpec {
                origin: h.geometry.origin,
                resolution: h.geometry.resolution,
                width: h.geometry.width,
                height: h.geometry.height,
                heights: h.heights.clone(),
            }),
            cruise_altitude: scene.cruise_altitude,
            hover_altitude: Some(scene.hover_altitude),
            knowledge: scene.knowledge.clone(),
        }
    }
}

pub fn parse_scenario(text: &str) -> Result<World, ScenarioError> {
    let scenario: Scenario = serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
    scenario.into_world()
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<World, ScenarioError> {
    parse_scenario(&std::fs::read_to_string(path)?)
}
