use airstar_core::geonav::{plan_route, SmoothingLimits};
use airstar_core::world::{load_scenario, GridKind, OccupancyGrid};
use airstar_core::Vec3;

fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

/// Clearance of the cell containing `p`: brute-force distance between cell
/// centers to the nearest occupied cell, in meters.
fn brute_clearance(g: &OccupancyGrid, p: &Vec3) -> f64 {
    let (r, c) = g.geometry.cell_of(p).expect("inside grid");
    let mut best = f64::INFINITY;
    for orow in 0..g.height() {
        for ocol in 0..g.width() {
            if g.is_occupied(orow, ocol) {
                let d = ((r as f64 - orow as f64).powi(2) + (c as f64 - ocol as f64).powi(2)).sqrt();
                best = best.min(d * g.resolution());
            }
        }
    }
    best
}

#[test]
fn l_bend_trajectory_contract() {
    let world = load_scenario(fixture("l_bend.json")).unwrap();
    let grid = world.grid(GridKind::UavExploration).unwrap();
    let limits = SmoothingLimits { v_max: 3.0, a_max: 2.0, c_min: 1.0 };
    let (start, goal) = (Vec3::new(5.0, 4.0, 0.0), Vec3::new(16.0, 15.0, 0.0));
    let route = plan_route(grid, &start, &goal, 3.0, &limits).unwrap();
    let traj = route.trajectory.expect("smoothing succeeded");

    assert!((traj.start() - Vec3::new(5.0, 4.0, 3.0)).norm() <= 1e-6);
    assert!((traj.end() - Vec3::new(16.0, 15.0, 3.0)).norm() <= 1e-6);

    let samples = traj.sampled_polyline();
    assert_eq!(samples.len(), traj.spans() * 10 + 1);
    for p in &samples {
        let c = brute_clearance(grid, p);
        assert!(c >= 1.0, "clearance {c} at {p:?}");
    }
    let (v, a) = traj.sampled_maxima();
    assert!(v <= 3.0 * (1.0 + 1e-9), "speed {v}");
    assert!(a <= 2.0 * (1.0 + 1e-9), "accel {a}");
    // The corridor forces a turn, so the route is longer than the chord.
    let length: f64 = samples.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    assert!(length > (goal - start).norm());
    assert!(traj.total_time >= length / 3.0 - 1e-9);
}

#[test]
fn l_bend_waypoints_turn_once_inside_the_corridor() {
    let world = load_scenario(fixture("l_bend.json")).unwrap();
    let grid = world.grid(GridKind::UavExploration).unwrap();
    let limits = SmoothingLimits { v_max: 3.0, a_max: 2.0, c_min: 1.0 };
    let route = plan_route(grid, &Vec3::new(5.0, 4.0, 0.0), &Vec3::new(16.0, 15.0, 0.0), 3.0, &limits).unwrap();
    assert!(route.waypoints.len() >= 3);
    for w in &route.waypoints {
        assert!(brute_clearance(grid, w) >= 1.0, "{w:?}");
    }
}
