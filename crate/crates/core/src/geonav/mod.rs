//! Long-range navigation: GPS↔local conversion, landmark lookup, A* on the
//! selected occupancy map, critical-waypoint pruning and trajectory smoothing.

mod astar;
mod distance;
mod smooth;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use astar::{astar_cells, plan_waypoints, simplify_path, GridPath, NEIGHBORS};
pub use distance::{inflate, DistanceField};
pub use smooth::{smooth_trajectory, SmoothingLimits, Trajectory, SAMPLES_PER_SPAN};

use crate::text;
use crate::world::{GeoPoint, GridKind, LandmarkNode, OccupancyGrid, World};
use crate::Vec3;

/// Mean Earth radius used by the equirectangular projection.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
/// Maximum |Δlat|, |Δlon| (degrees) for which the projection is used.
pub const REGION_DEG: f64 = 0.1;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GeoNavError {
    #[error("point is outside the {REGION_DEG}° projection region")]
    OutOfRegion,
    #[error("no landmark matches {0:?}")]
    NotFound(String),
    #[error("scenario has no {0:?} grid")]
    MissingGrid(GridKind),
    #[error("start cell is blocked or outside the grid")]
    StartBlocked,
    #[error("goal cell is blocked or outside the grid")]
    GoalBlocked,
    #[error("no path between start and goal")]
    NoPath,
    #[error("trajectory smoothing failed: {0}")]
    SmoothingFailed(String),
}

pub fn gps_to_local(reference: &GeoPoint, p: &GeoPoint) -> Result<Vec3, GeoNavError> {
    let dlat = p.lat - reference.lat;
    let dlon = p.lon - reference.lon;
    if !(dlat.abs() < REGION_DEG && dlon.abs() < REGION_DEG) {
        return Err(GeoNavError::OutOfRegion);
    }
    Ok(Vec3::new(
        EARTH_RADIUS_M * reference.lat.to_radians().cos() * dlon.to_radians(),
        EARTH_RADIUS_M * dlat.to_radians(),
        p.alt - reference.alt,
    ))
}

pub fn local_to_gps(reference: &GeoPoint, p: &Vec3) -> Result<GeoPoint, GeoNavError> {
    let dlat = (p.y / EARTH_RADIUS_M).to_degrees();
    let dlon = (p.x / (EARTH_RADIUS_M * reference.lat.to_radians().cos())).to_degrees();
    if !(dlat.abs() < REGION_DEG && dlon.abs() < REGION_DEG) {
        return Err(GeoNavError::OutOfRegion);
    }
    Ok(GeoPoint { lat: reference.lat + dlat, lon: reference.lon + dlon, alt: reference.alt + p.z })
}

/// Resolves a free-text landmark mention.
///
/// A case-insensitive exact match on name or alias wins outright; otherwise
/// the node sharing the most content tokens with the query. Ties go to the
/// lexicographically smallest id.
pub fn lookup_landmark<'a>(landmarks: &'a [LandmarkNode], query: &str) -> Result<&'a LandmarkNode, GeoNavError> {
    let q = query.trim().trim_end_matches(['.', '!', '?', ',']).trim();
    let not_found = || GeoNavError::NotFound(query.to_string());
    if q.is_empty() {
        return Err(not_found());
    }
    let by_id = |a: &&LandmarkNode, b: &&LandmarkNode| a.id.cmp(&b.id);
    let exact = landmarks
        .iter()
        .filter(|lm| {
            lm.name.trim().eq_ignore_ascii_case(q) || lm.aliases.iter().any(|a| a.trim().eq_ignore_ascii_case(q))
        })
        .min_by(by_id);
    if let Some(lm) = exact {
        return Ok(lm);
    }
    let query_tokens = text::content_tokens(q);
    landmarks
        .iter()
        .map(|lm| {
            let names = std::iter::once(lm.name.as_str()).chain(lm.aliases.iter().map(String::as_str));
            (text::overlap(&query_tokens, names), lm)
        })
        .filter(|(score, _)| *score > 0)
        .max_by(|(sa, a), (sb, b)| sa.cmp(sb).then_with(|| b.id.cmp(&a.id)))
        .map(|(_, lm)| lm)
        .ok_or_else(not_found)
}

/// Which occupancy map a mission plans on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissionKind {
    UavAutonomous,
    PedestrianGuide,
}

impl MissionKind {
    pub fn grid_kind(self) -> GridKind {
        match self {
            MissionKind::UavAutonomous => GridKind::UavExploration,
            MissionKind::PedestrianGuide => GridKind::PedestrianGuidance,
        }
    }

    pub fn other(self) -> Self {
        match self {
            MissionKind::UavAutonomous => MissionKind::PedestrianGuide,
            MissionKind::PedestrianGuide => MissionKind::UavAutonomous,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MissionKind::UavAutonomous => "uav_autonomous",
            MissionKind::PedestrianGuide => "pedestrian_guide",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "uav_autonomous" => Some(MissionKind::UavAutonomous),
            "pedestrian_guide" => Some(MissionKind::PedestrianGuide),
            _ => None,
        }
    }
}

pub fn select_map(world: &World, kind: MissionKind) -> Result<&OccupancyGrid, GeoNavError> {
    let gk = kind.grid_kind();
    world.grid(gk).ok_or(GeoNavError::MissingGrid(gk))
}

/// Default clearance per map: 1.0 m for the UAV grid, 0.5 m for walkways.
pub fn default_clearance(kind: GridKind) -> f64 {
    match kind {
        GridKind::UavExploration => 1.0,
        GridKind::PedestrianGuidance => 0.5,
    }
}

/// Output of the full long-range pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub path: GridPath,
    pub waypoints: Vec<Vec3>,
    /// `None` when smoothing failed and the waypoints must be followed as a
    /// polyline.
    pub trajectory: Option<Trajectory>,
    pub clearance: f64,
}

/// Nearest cell (by BFS ring) that is free in `grid`, searching at most
/// `max_rings` cells away.
pub fn nearest_free(grid: &OccupancyGrid, cell: (usize, usize), max_rings: usize) -> Option<(usize, usize)> {
    if !grid.is_occupied(cell.0, cell.1) {
        return Some(cell);
    }
    let (r0, c0) = (cell.0 as i64, cell.1 as i64);
    for ring in 1..=max_rings as i64 {
        let mut best: Option<((usize, usize), i64)> = None;
        for dr in -ring..=ring {
            for dc in -ring..=ring {
                if dr.abs() != ring && dc.abs() != ring {
                    continue;
                }
                let (r, c) = (r0 + dr, c0 + dc);
                if grid.geometry.in_bounds(r, c) && !grid.is_occupied(r as usize, c as usize) {
                    let d2 = dr * dr + dc * dc;
                    if best.is_none_or(|(_, bd)| d2 < bd) {
                        best = Some(((r as usize, c as usize), d2));
                    }
                }
            }
        }
        if let Some((c, _)) = best {
            return Some(c);
        }
    }
    None
}

/// Plans from `start` to `goal` at `altitude`: A* on the grid inflated by
/// `limits.c_min`, line-of-sight pruning, then B-spline smoothing. Endpoints
/// that fall inside the inflated margin snap to the nearest free cell within
/// 5 m. The start may lie on an occupied cell of this map (the UAV can hover
/// over ground that is closed to walkers); the goal may not.
pub fn plan_route(
    grid: &OccupancyGrid,
    start: &Vec3,
    goal: &Vec3,
    altitude: f64,
    limits: &SmoothingLimits,
) -> Result<Route, GeoNavError> {
    let inflated = inflate(grid, limits.c_min);
    let rings = (5.0 / grid.resolution()).ceil() as usize;
    let snap = |p: &Vec3, err: GeoNavError, strict: bool| -> Result<((usize, usize), Vec3), GeoNavError> {
        let cell = grid.geometry.cell_of(p).ok_or(err.clone())?;
        if strict && grid.is_occupied(cell.0, cell.1) {
            return Err(err);
        }
        let free = nearest_free(&inflated, cell, rings).ok_or(err)?;
        let point = if free == cell { Vec3::new(p.x, p.y, altitude) } else {
            let c = grid.geometry.cell_center(free.0, free.1);
            Vec3::new(c.x, c.y, altitude)
        };
        Ok((free, point))
    };
    let (start_cell, start_point) = snap(start, GeoNavError::StartBlocked, false)?;
    let (goal_cell, goal_point) = snap(goal, GeoNavError::GoalBlocked, true)?;
    let path = astar_cells(&inflated, start_cell, goal_cell)?;
    let mut waypoints: Vec<Vec3> = simplify_path(&inflated, &path)
        .into_iter()
        .map(|p| Vec3::new(p.x, p.y, altitude))
        .collect();
    *waypoints.first_mut().expect("nonempty") = start_point;
    *waypoints.last_mut().expect("nonempty") = goal_point;
    if waypoints.len() == 1 {
        waypoints.push(goal_point);
    }
    let trajectory = smooth_trajectory(&waypoints, grid, limits).ok();
    Ok(Route { path, waypoints, trajectory, clearance: limits.c_min })
}
