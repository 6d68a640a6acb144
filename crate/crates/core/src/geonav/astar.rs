use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use super::GeoNavError;
use crate::world::OccupancyGrid;
use crate::Vec3;

/// Neighbor expansion order as `(d_row, d_col)`: E, NE, N, NW, W, SW, S, SE
/// (rows grow northward).
pub const NEIGHBORS: [(i64, i64); 8] = [(0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPath {
    pub cells: Vec<(usize, usize)>,
    pub cost: f64,
}

fn octile(a: (usize, usize), b: (usize, usize)) -> f64 {
    let dr = a.0.abs_diff(b.0) as f64;
    let dc = a.1.abs_diff(b.1) as f64;
    dr.max(dc) + (SQRT_2 - 1.0) * dr.min(dc)
}

#[derive(Debug, Clone, Copy)]
struct Open {
    f: f64,
    h: f64,
    seq: u64,
    node: usize,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Open {}

impl Ord for Open {
    // BinaryHeap is a max-heap: invert so the smallest (f, h, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.h.total_cmp(&self.h))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Free neighbors of `cell` with step costs. Diagonal moves require both
/// orthogonally adjacent cells to be free (no corner cutting).
pub(crate) fn free_neighbors(grid: &OccupancyGrid, cell: (usize, usize)) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
    let (r, c) = (cell.0 as i64, cell.1 as i64);
    let free = move |r: i64, c: i64| grid.geometry.in_bounds(r, c) && !grid.is_occupied(r as usize, c as usize);
    NEIGHBORS.iter().filter_map(move |&(dr, dc)| {
        let (nr, nc) = (r + dr, c + dc);
        if !free(nr, nc) {
            return None;
        }
        if dr != 0 && dc != 0 {
            if !free(r + dr, c) || !free(r, c + dc) {
                return None;
            }
            Some(((nr as usize, nc as usize), SQRT_2))
        } else {
            Some(((nr as usize, nc as usize), 1.0))
        }
    })
}

/// 8-connected A* with octile heuristic. Ties in f go to the smaller h, then
/// to the earlier push (which follows the fixed neighbor order).
pub fn astar_cells(grid: &OccupancyGrid, start: (usize, usize), goal: (usize, usize)) -> Result<GridPath, GeoNavError> {
    let g = &grid.geometry;
    if !g.in_bounds(start.0 as i64, start.1 as i64) || grid.is_occupied(start.0, start.1) {
        return Err(GeoNavError::StartBlocked);
    }
    if !g.in_bounds(goal.0 as i64, goal.1 as i64) || grid.is_occupied(goal.0, goal.1) {
        return Err(GeoNavError::GoalBlocked);
    }
    let n = g.len();
    let mut g_score = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let start_i = g.index(start.0, start.1);
    let goal_i = g.index(goal.0, goal.1);
    g_score[start_i] = 0.0;
    let h0 = octile(start, goal);
    heap.push(Open { f: h0, h: h0, seq, node: start_i });

    while let Some(Open { node, .. }) = heap.pop() {
        if closed[node] {
            continue;
        }
        closed[node] = true;
        if node == goal_i {
            let mut cells = vec![];
            let mut cur = node;
            while cur != usize::MAX {
                cells.push((cur / g.width, cur % g.width));
                cur = parent[cur];
            }
            cells.reverse();
            return Ok(GridPath { cells, cost: g_score[goal_i] });
        }
        let cell = (node / g.width, node % g.width);
        for (nb, step) in free_neighbors(grid, cell) {
            let ni = g.index(nb.0, nb.1);
            if closed[ni] {
                continue;
            }
            let tentative = g_score[node] + step;
            if tentative < g_score[ni] {
                g_score[ni] = tentative;
                parent[ni] = node;
                let h = octile(nb, goal);
                seq += 1;
                heap.push(Open { f: tentative + h, h, seq, node: ni });
            }
        }
    }
    Err(GeoNavError::NoPath)
}

/// A* between the cells containing two local points.
pub fn plan_waypoints(grid: &OccupancyGrid, start: &Vec3, goal: &Vec3) -> Result<GridPath, GeoNavError> {
    let s = grid.geometry.cell_of(start).ok_or(GeoNavError::StartBlocked)?;
    let t = grid.geometry.cell_of(goal).ok_or(GeoNavError::GoalBlocked)?;
    astar_cells(grid, s, t)
}

/// Greedy line-of-sight pruning. Starting from the first cell, the last cell
/// still visible from the current anchor is kept whenever the next cell is
/// not visible. Returns cell centers (z = 0).
pub fn simplify_path(grid: &OccupancyGrid, path: &GridPath) -> Vec<Vec3> {
    let cells = &path.cells;
    let center = |c: (usize, usize)| grid.geometry.cell_center(c.0, c.1);
    if cells.len() <= 2 {
        return cells.iter().map(|c| center(*c)).collect();
    }
    let mut kept = vec![cells[0]];
    let mut anchor = cells[0];
    for i in 1..cells.len() {
        if !grid.line_of_sight(anchor, cells[i]) {
            anchor = cells[i - 1];
            kept.push(anchor);
        }
    }
    kept.push(*cells.last().expect("nonempty"));
    kept.dedup();
    kept.into_iter().map(center).collect()
}
