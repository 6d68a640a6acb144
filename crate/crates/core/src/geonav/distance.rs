use crate::world::{GridGeometry, OccupancyGrid};
use crate::Vec3;

/// Clearance map: for each cell, the center-to-center distance (meters) to
/// the nearest occupied cell, `+inf` when the grid has no obstacles.
///
/// Exact Euclidean transform via two separable lower-envelope passes
/// (columns, then rows) over squared distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub geometry: GridGeometry,
    pub dist: Vec<f64>,
}

/// 1-D squared distance transform of sampled function `f` (lower envelope of
/// parabolas rooted at each sample).
fn edt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let Some(q0) = f.iter().position(|x| x.is_finite()) else {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    };
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = q0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let meet = |p: usize, q: usize| {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
    };
    for q in q0 + 1..n {
        if f[q].is_infinite() {
            continue;
        }
        let mut s = meet(v[k], q);
        while s <= z[k] {
            k -= 1;
            s = meet(v[k], q);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut k = 0usize;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

impl DistanceField {
    pub fn compute(grid: &OccupancyGrid) -> Self {
        let g = grid.geometry;
        let (w, h) = (g.width, g.height);
        let mut sq: Vec<f64> = grid.cells.iter().map(|o| if *o { 0.0 } else { f64::INFINITY }).collect();
        let mut col_in = vec![0.0; h];
        let mut col_out = vec![0.0; h];
        for c in 0..w {
            for r in 0..h {
                col_in[r] = sq[r * w + c];
            }
            edt_1d(&col_in, &mut col_out);
            for r in 0..h {
                sq[r * w + c] = col_out[r];
            }
        }
        let mut row_out = vec![0.0; w];
        for r in 0..h {
            edt_1d(&sq[r * w..(r + 1) * w], &mut row_out);
            sq[r * w..(r + 1) * w].copy_from_slice(&row_out);
        }
        let dist = sq.into_iter().map(|d| d.sqrt() * g.resolution).collect();
        Self { geometry: g, dist }
    }

    pub fn at_cell(&self, row: usize, col: usize) -> f64 {
        self.dist[self.geometry.index(row, col)]
    }

    /// Clearance of the cell containing `p`; 0 outside the grid.
    pub fn clearance_at(&self, p: &Vec3) -> f64 {
        self.geometry.cell_of(p).map_or(0.0, |(r, c)| self.at_cell(r, c))
    }

    /// Central-difference gradient of the clearance around the cell containing
    /// `p` (horizontal, unnormalized). Infinite neighbors count as far away.
    pub fn gradient_at(&self, p: &Vec3) -> Vec3 {
        let Some((r, c)) = self.geometry.cell_of(p) else { return Vec3::zeros() };
        let g = &self.geometry;
        let cap = (g.width.max(g.height) as f64) * g.resolution;
        let sample = |r: i64, c: i64| -> f64 {
            if g.in_bounds(r, c) {
                self.at_cell(r as usize, c as usize).min(cap)
            } else {
                0.0
            }
        };
        let (r, c) = (r as i64, c as i64);
        Vec3::new(sample(r, c + 1) - sample(r, c - 1), sample(r + 1, c) - sample(r - 1, c), 0.0)
    }
}

/// Grid with every cell of clearance below `c_min` marked occupied.
pub fn inflate(grid: &OccupancyGrid, c_min: f64) -> OccupancyGrid {
    let field = DistanceField::compute(grid);
    OccupancyGrid {
        kind: grid.kind,
        geometry: grid.geometry,
        cells: field.dist.iter().map(|d| *d < c_min).collect(),
    }
}
