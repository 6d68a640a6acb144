//! Raster geometry shared by occupancy grids and the terrain heightmap, plus
//! Amanatides–Woo cell traversal.

use serde::{Deserialize, Serialize};

use crate::Vec3;

/// Which travel mode an occupancy grid serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    UavExploration,
    PedestrianGuidance,
}

/// Placement of a row-major raster in the local ENU frame. Rows run north
/// (+y), columns run east (+x); `origin` is the outer corner of cell (0,0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    pub origin: [f64; 2],
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
}

/// One cell crossed by a ray, with the ray-parameter interval spent inside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellCrossing {
    pub row: usize,
    pub col: usize,
    pub t_enter: f64,
    pub t_exit: f64,
}

impl GridGeometry {
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn in_bounds(&self, row: i64, col: i64) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.height && (col as usize) < self.width
    }

    /// Cell containing the horizontal position of `p`, if inside the raster.
    pub fn cell_of(&self, p: &Vec3) -> Option<(usize, usize)> {
        let fx = (p.x - self.origin[0]) / self.resolution;
        let fy = (p.y - self.origin[1]) / self.resolution;
        if !(fx >= 0.0 && fy >= 0.0) {
            return None;
        }
        let (col, row) = (fx.floor() as usize, fy.floor() as usize);
        (row < self.height && col < self.width).then_some((row, col))
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Vec3 {
        Vec3::new(
            self.origin[0] + (col as f64 + 0.5) * self.resolution,
            self.origin[1] + (row as f64 + 0.5) * self.resolution,
            0.0,
        )
    }

    pub fn max_corner(&self) -> [f64; 2] {
        [
            self.origin[0] + self.width as f64 * self.resolution,
            self.origin[1] + self.height as f64 * self.resolution,
        ]
    }

    /// Visits, in ray order, every cell the horizontal projection of the ray
    /// `origin + t*dir`, `t ∈ [0, max_t]` passes through. When the ray crosses
    /// a cell corner exactly, both side cells are reported (supercover) so
    /// corner grazes are never missed. `visit` returns `false` to stop early.
    pub fn traverse<F>(&self, origin: &Vec3, dir: &Vec3, max_t: f64, mut visit: F)
    where
        F: FnMut(CellCrossing) -> bool,
    {
        if self.is_empty() || !(max_t >= 0.0) {
            return;
        }
        let [x0, y0] = self.origin;
        let [x1, y1] = self.max_corner();
        let (mut t0, mut t1) = (0.0_f64, max_t);
        for (o, d, lo, hi) in [(origin.x, dir.x, x0, x1), (origin.y, dir.y, y0, y1)] {
            if d == 0.0 {
                if o < lo || o >= hi {
                    return;
                }
            } else {
                let (mut a, mut b) = ((lo - o) / d, (hi - o) / d);
                if a > b {
                    std::mem::swap(&mut a, &mut b);
                }
                t0 = t0.max(a);
                t1 = t1.min(b);
            }
        }
        if t0 > t1 {
            return;
        }
        let res = self.resolution;
        let start = origin + dir * t0;
        let clamp_idx = |v: f64, n: usize| -> i64 { (v.floor() as i64).clamp(0, n as i64 - 1) };
        let mut col = clamp_idx((start.x - x0) / res, self.width);
        let mut row = clamp_idx((start.y - y0) / res, self.height);

        let axis = |o: f64, d: f64, base: f64, idx: i64| -> (i64, f64, f64) {
            if d > 0.0 {
                (1, (base + (idx + 1) as f64 * res - o) / d, res / d)
            } else if d < 0.0 {
                (-1, (base + idx as f64 * res - o) / d, -res / d)
            } else {
                (0, f64::INFINITY, f64::INFINITY)
            }
        };
        let (step_c, mut tmax_x, dt_x) = axis(origin.x, dir.x, x0, col);
        let (step_r, mut tmax_y, dt_y) = axis(origin.y, dir.y, y0, row);

        let mut t_enter = t0;
        loop {
            let t_next = tmax_x.min(tmax_y);
            let t_exit = t_next.min(t1);
            let keep_going = visit(CellCrossing {
                row: row as usize,
                col: col as usize,
                t_enter,
                t_exit,
            });
            if !keep_going || t_next >= t1 {
                return;
            }
            let tie = (tmax_x - tmax_y).abs() <= 1e-12 * t_next.abs().max(1.0);
            if tie {
                for (r, c) in [(row, col + step_c), (row + step_r, col)] {
                    if self.in_bounds(r, c)
                        && !visit(CellCrossing {
                            row: r as usize,
                            col: c as usize,
                            t_enter: t_next,
                            t_exit: t_next,
                        })
                    {
                        return;
                    }
                }
                col += step_c;
                row += step_r;
                tmax_x += dt_x;
                tmax_y += dt_y;
            } else if tmax_x < tmax_y {
                col += step_c;
                tmax_x += dt_x;
            } else {
                row += step_r;
                tmax_y += dt_y;
            }
            if !self.in_bounds(row, col) {
                return;
            }
            t_enter = t_next;
        }
    }
}

/// A 2-D boolean occupancy raster (`true` = blocked).
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub kind: GridKind,
    pub geometry: GridGeometry,
    pub cells: Vec<bool>,
}

impl OccupancyGrid {
    pub fn new(kind: GridKind, geometry: GridGeometry) -> Self {
        Self { kind, geometry, cells: vec![false; geometry.len()] }
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }

    pub fn resolution(&self) -> f64 {
        self.geometry.resolution
    }

    pub fn is_occupied(&self, row: usize, col: usize) -> bool {
        self.cells[self.geometry.index(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, occupied: bool) {
        let i = self.geometry.index(row, col);
        self.cells[i] = occupied;
    }

    /// Marks every cell whose center lies in the axis-aligned rectangle.
    pub fn fill_rect(&mut self, min: [f64; 2], max: [f64; 2]) {
        for row in 0..self.height() {
            for col in 0..self.width() {
                let c = self.geometry.cell_center(row, col);
                if c.x >= min[0] && c.x <= max[0] && c.y >= min[1] && c.y <= max[1] {
                    self.set(row, col, true);
                }
            }
        }
    }

    pub fn occupied_at(&self, p: &Vec3) -> Option<bool> {
        self.geometry.cell_of(p).map(|(r, c)| self.is_occupied(r, c))
    }

    /// First ray parameter at which the ray enters an occupied cell.
    pub fn first_hit(&self, origin: &Vec3, dir: &Vec3, max_t: f64) -> Option<f64> {
        let mut hit = None;
        self.geometry.traverse(origin, dir, max_t, |c| {
            if self.is_occupied(c.row, c.col) {
                hit = Some(c.t_enter);
                false
            } else {
                true
            }
        });
        hit
    }

    /// True when the straight grid walk between two cell centers crosses only
    /// free cells (both endpoints included).
    pub fn line_of_sight(&self, a: (usize, usize), b: (usize, usize)) -> bool {
        let pa = self.geometry.cell_center(a.0, a.1);
        let pb = self.geometry.cell_center(b.0, b.1);
        let delta = pb - pa;
        let len = delta.norm();
        if len == 0.0 {
            return !self.is_occupied(a.0, a.1);
        }
        self.first_hit(&pa, &(delta / len), len).is_none()
    }
}

/// Ground surface: the z = 0 plane raised by an optional column heightmap.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Terrain {
    pub heightmap: Option<Heightmap>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heightmap {
    pub geometry: GridGeometry,
    pub heights: Vec<f64>,
}

impl Terrain {
    pub fn height_at(&self, p: &Vec3) -> f64 {
        self.heightmap
            .as_ref()
            .and_then(|h| h.geometry.cell_of(p).map(|(r, c)| h.heights[h.geometry.index(r, c)]))
            .unwrap_or(0.0)
            .max(0.0)
    }

    /// First ray parameter at which the ray goes below the ground surface.
    pub fn first_hit(&self, origin: &Vec3, dir: &Vec3, max_t: f64) -> Option<f64> {
        if origin.z < self.height_at(origin) {
            return Some(0.0);
        }
        let mut best = if dir.z < 0.0 {
            let t = origin.z / -dir.z;
            (t <= max_t).then_some(t)
        } else {
            None
        };
        if let Some(hm) = &self.heightmap {
            let limit = best.unwrap_or(max_t);
            hm.geometry.traverse(origin, dir, limit, |c| {
                let h = hm.heights[hm.geometry.index(c.row, c.col)];
                if h <= 0.0 {
                    return true;
                }
                let z_in = origin.z + c.t_enter * dir.z;
                let z_out = origin.z + c.t_exit * dir.z;
                if z_in < h {
                    best = Some(c.t_enter);
                    false
                } else if z_out < h {
                    best = Some((h - origin.z) / dir.z);
                    false
                } else {
                    true
                }
            });
        }
        best
    }
}
