use serde::{Deserialize, Serialize};

use super::{DistanceField, GeoNavError};
use crate::world::OccupancyGrid;
use crate::Vec3;

/// Samples per B-spline span used for every feasibility and clearance check.
pub const SAMPLES_PER_SPAN: usize = 10;
const MAX_REPAIR_ITERATIONS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingLimits {
    pub v_max: f64,
    pub a_max: f64,
    pub c_min: f64,
}

/// Uniform cubic B-spline, time-parameterized with a constant `knot_dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub control_points: Vec<Vec3>,
    pub knot_dt: f64,
    pub total_time: f64,
}

fn basis(s: f64) -> [f64; 4] {
    let s2 = s * s;
    let s3 = s2 * s;
    [
        (1.0 - s).powi(3) / 6.0,
        (3.0 * s3 - 6.0 * s2 + 4.0) / 6.0,
        (-3.0 * s3 + 3.0 * s2 + 3.0 * s + 1.0) / 6.0,
        s3 / 6.0,
    ]
}

fn basis_d1(s: f64) -> [f64; 4] {
    [
        -(1.0 - s).powi(2) / 2.0,
        (3.0 * s * s - 4.0 * s) / 2.0,
        (-3.0 * s * s + 2.0 * s + 1.0) / 2.0,
        s * s / 2.0,
    ]
}

fn basis_d2(s: f64) -> [f64; 4] {
    [1.0 - s, 3.0 * s - 2.0, -3.0 * s + 1.0, s]
}

fn combine(points: &[Vec3], w: [f64; 4]) -> Vec3 {
    points[0] * w[0] + points[1] * w[1] + points[2] * w[2] + points[3] * w[3]
}

/// Sample locations `(span, s)`: `SAMPLES_PER_SPAN` per span plus the end.
fn sample_params(spans: usize) -> impl Iterator<Item = (usize, f64)> {
    (0..spans)
        .flat_map(|i| (0..SAMPLES_PER_SPAN).map(move |j| (i, j as f64 / SAMPLES_PER_SPAN as f64)))
        .chain(std::iter::once((spans - 1, 1.0)))
}

impl Trajectory {
    pub fn spans(&self) -> usize {
        self.control_points.len() - 3
    }

    pub fn start(&self) -> Vec3 {
        self.eval(0.0).0
    }

    pub fn end(&self) -> Vec3 {
        self.eval(self.total_time).0
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let u = (t / self.knot_dt).clamp(0.0, self.spans() as f64);
        let i = (u.floor() as usize).min(self.spans() - 1);
        (i, u - i as f64)
    }

    /// Position, velocity and acceleration at time `t` (clamped to the
    /// trajectory's duration).
    pub fn eval(&self, t: f64) -> (Vec3, Vec3, Vec3) {
        let (i, s) = self.locate(t);
        let p = &self.control_points[i..i + 4];
        (
            combine(p, basis(s)),
            combine(p, basis_d1(s)) / self.knot_dt,
            combine(p, basis_d2(s)) / (self.knot_dt * self.knot_dt),
        )
    }

    /// Positions at the check samples (10 per span plus the end point).
    pub fn sampled_polyline(&self) -> Vec<Vec3> {
        sample_params(self.spans())
            .map(|(i, s)| combine(&self.control_points[i..i + 4], basis(s)))
            .collect()
    }

    /// Largest sampled speed and acceleration magnitude.
    pub fn sampled_maxima(&self) -> (f64, f64) {
        sample_params(self.spans()).fold((0.0f64, 0.0f64), |(v, a), (i, s)| {
            let p = &self.control_points[i..i + 4];
            let vel = combine(p, basis_d1(s)).norm() / self.knot_dt;
            let acc = combine(p, basis_d2(s)).norm() / (self.knot_dt * self.knot_dt);
            (v.max(vel), a.max(acc))
        })
    }

    /// Smallest clearance over the sampled polyline.
    pub fn min_clearance(&self, field: &DistanceField) -> f64 {
        self.sampled_polyline().iter().map(|p| field.clearance_at(p)).fold(f64::INFINITY, f64::min)
    }
}

/// Waypoint polyline resampled so consecutive points are at most `spacing`
/// apart. Every original waypoint is kept.
fn densify(waypoints: &[Vec3], spacing: f64) -> Vec<Vec3> {
    let mut out = vec![waypoints[0]];
    for w in waypoints.windows(2) {
        let len = (w[1] - w[0]).norm();
        let n = (len / spacing).ceil().max(1.0) as usize;
        for k in 1..=n {
            out.push(w[0] + (w[1] - w[0]) * (k as f64 / n as f64));
        }
    }
    out.dedup();
    out
}

/// Smooths a waypoint chain into a clearance-respecting, dynamically feasible
/// uniform cubic B-spline.
///
/// The densified waypoints become control points with the first and last
/// tripled so the curve starts and ends exactly on them at rest. Samples whose
/// clearance falls below `c_min` push their dominant movable control point
/// along the distance-field gradient by half a cell per iteration. Time is
/// scaled uniformly so that sampled speed and acceleration respect the limits.
pub fn smooth_trajectory(
    waypoints: &[Vec3],
    grid: &OccupancyGrid,
    limits: &SmoothingLimits,
) -> Result<Trajectory, GeoNavError> {
    if waypoints.len() < 2 {
        return Err(GeoNavError::SmoothingFailed("need at least two waypoints".into()));
    }
    let field = DistanceField::compute(grid);
    let res = grid.resolution();
    let dense = densify(waypoints, res);
    let first = dense[0];
    let last = *dense.last().expect("nonempty");
    let mut cps = vec![first, first];
    cps.extend(dense.iter().copied());
    cps.extend([last, last]);
    let n = cps.len();
    let movable = 3..n.saturating_sub(3);

    let mut repaired = false;
    for _ in 0..=MAX_REPAIR_ITERATIONS {
        let mut pushes: Vec<(usize, Vec3)> = vec![];
        for (i, s) in sample_params(n - 3) {
            let w = basis(s);
            let p = combine(&cps[i..i + 4], w);
            if field.clearance_at(&p) >= limits.c_min {
                continue;
            }
            let Some(k) = (0..4)
                .filter(|k| movable.contains(&(i + k)))
                .max_by(|a, b| w[*a].total_cmp(&w[*b]).then_with(|| b.cmp(a)))
            else {
                continue;
            };
            let idx = i + k;
            if pushes.iter().any(|(j, _)| *j == idx) {
                continue;
            }
            let mut grad = field.gradient_at(&p);
            if grad.norm() == 0.0 {
                grad = field.gradient_at(&cps[idx]);
            }
            if grad.norm() > 0.0 {
                pushes.push((idx, grad.normalize() * (0.5 * res)));
            }
        }
        if pushes.is_empty() {
            repaired = true;
            break;
        }
        for (idx, delta) in pushes {
            cps[idx] += delta;
        }
    }
    let mut traj = Trajectory { control_points: cps, knot_dt: 1.0, total_time: 0.0 };
    if !repaired || traj.min_clearance(&field) < limits.c_min {
        return Err(GeoNavError::SmoothingFailed(format!(
            "clearance below {} m after {MAX_REPAIR_ITERATIONS} repair iterations",
            limits.c_min
        )));
    }

    // With knot_dt = 1 the maxima are the raw derivative magnitudes.
    let (d1, d2) = traj.sampled_maxima();
    let dt = (d1 / limits.v_max).max((d2 / limits.a_max).sqrt()) * (1.0 + 1e-9);
    traj.knot_dt = if dt > 0.0 && dt.is_finite() { dt } else { 1e-3 };
    traj.total_time = traj.knot_dt * traj.spans() as f64;
    Ok(traj)
}
