//! Property tests against independent oracles.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};
use std::f64::consts::{PI, SQRT_2};

use airstar_core::camera::{CameraModel, Extrinsic, Pose};
use airstar_core::geonav::{astar_cells, gps_to_local, local_to_gps, DistanceField};
use airstar_core::mission::{transition, MissionEvent, MissionState};
use airstar_core::planner::{registry, validate, PlanDocument, StepDocument};
use airstar_core::skills::{body_yaw_for, scan_views, MockScorer, SkillError, SCAN_OFFSETS};
use airstar_core::text::tokenize;
use airstar_core::wire::{decode, encode, EventLevel, WireMessage};
use airstar_core::world::{
    render_objects, GeoPoint, GridGeometry, GridKind, Limits, OccupancyGrid, Pedestrian, Scene, SceneObject,
    Terrain, UavMode, UavState, World,
};
use airstar_core::Vec3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

fn grid(w: usize, h: usize, res: f64) -> OccupancyGrid {
    OccupancyGrid::new(GridKind::UavExploration, GridGeometry { origin: [0.0, 0.0], resolution: res, width: w, height: h })
}

fn random_grid(seed: u64, w: usize, h: usize, density: f64) -> OccupancyGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = grid(w, h, 1.0);
    for r in 0..h {
        for c in 0..w {
            g.set(r, c, rng.random_bool(density));
        }
    }
    g
}

/// Plain Dijkstra over the same move model: 8-connected, costs 1 and √2,
/// diagonals need both side cells free.
fn dijkstra(g: &OccupancyGrid, s: (usize, usize), t: (usize, usize)) -> Option<f64> {
    #[derive(PartialEq)]
    struct Item(f64, usize);
    impl Eq for Item {}
    impl Ord for Item {
        fn cmp(&self, o: &Self) -> Ordering {
            o.0.total_cmp(&self.0)
        }
    }
    impl PartialOrd for Item {
        fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
            Some(self.cmp(o))
        }
    }
    let (w, h) = (g.width() as i64, g.height() as i64);
    let free = |r: i64, c: i64| r >= 0 && c >= 0 && r < h && c < w && !g.is_occupied(r as usize, c as usize);
    let mut dist = vec![f64::INFINITY; (w * h) as usize];
    let si = s.0 * w as usize + s.1;
    dist[si] = 0.0;
    let mut heap = BinaryHeap::from([Item(0.0, si)]);
    while let Some(Item(d, i)) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        let (r, c) = ((i / w as usize) as i64, (i % w as usize) as i64);
        if (r as usize, c as usize) == t {
            return Some(d);
        }
        for dr in -1..=1 {
            for dc in -1..=1 {
                if (dr, dc) == (0, 0) || !free(r + dr, c + dc) {
                    continue;
                }
                let diag = dr != 0 && dc != 0;
                if diag && (!free(r + dr, c) || !free(r, c + dc)) {
                    continue;
                }
                let nd = d + if diag { SQRT_2 } else { 1.0 };
                let j = ((r + dr) * w + c + dc) as usize;
                if nd < dist[j] {
                    dist[j] = nd;
                    heap.push(Item(nd, j));
                }
            }
        }
    }
    None
}

fn free_cells(g: &OccupancyGrid) -> Vec<(usize, usize)> {
    (0..g.height()).flat_map(|r| (0..g.width()).map(move |c| (r, c))).filter(|&(r, c)| !g.is_occupied(r, c)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn astar_cost_equals_dijkstra(seed in any::<u64>(), a in any::<prop::sample::Index>(), b in any::<prop::sample::Index>()) {
        let g = random_grid(seed, 30, 30, 0.3);
        let free = free_cells(&g);
        prop_assume!(free.len() >= 2);
        let (s, t) = (*a.get(&free), *b.get(&free));
        match (astar_cells(&g, s, t), dijkstra(&g, s, t)) {
            (Ok(p), Some(d)) => {
                prop_assert!((p.cost - d).abs() < 1e-9, "astar {} dijkstra {}", p.cost, d);
                prop_assert_eq!(p.cells.first(), Some(&s));
                prop_assert_eq!(p.cells.last(), Some(&t));
                let mut walked = 0.0;
                for w in p.cells.windows(2) {
                    let (dr, dc) = (w[0].0.abs_diff(w[1].0), w[0].1.abs_diff(w[1].1));
                    prop_assert!(dr <= 1 && dc <= 1 && dr + dc > 0);
                    prop_assert!(!g.is_occupied(w[1].0, w[1].1));
                    walked += if dr + dc == 2 { SQRT_2 } else { 1.0 };
                }
                prop_assert!((walked - p.cost).abs() < 1e-9);
            }
            (Err(_), None) => {}
            (a, d) => prop_assert!(false, "astar {:?} vs dijkstra {:?}", a.map(|p| p.cost), d),
        }
    }
}

/// Entry distance of the ray into the nearest occupied cell, by slab tests
/// against every occupied cell's square.
fn slab_oracle(g: &OccupancyGrid, o: &Vec3, d: &Vec3, max_t: f64) -> Option<f64> {
    let res = g.resolution();
    let mut best: Option<f64> = None;
    for (r, c) in (0..g.height()).flat_map(|r| (0..g.width()).map(move |c| (r, c))) {
        if !g.is_occupied(r, c) {
            continue;
        }
        let min = [c as f64 * res, r as f64 * res];
        let max = [min[0] + res, min[1] + res];
        let (mut t0, mut t1) = (0.0f64, max_t);
        let mut hit = true;
        for k in 0..2 {
            if d[k] == 0.0 {
                if o[k] < min[k] || o[k] > max[k] {
                    hit = false;
                }
            } else {
                let (a, b) = ((min[k] - o[k]) / d[k], (max[k] - o[k]) / d[k]);
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
        }
        if hit && t0 <= t1 {
            best = Some(best.map_or(t0, |x: f64| x.min(t0)));
        }
    }
    best
}

fn bare_world(g: OccupancyGrid) -> World {
    World::new(Scene {
        seed: 0,
        reference: GeoPoint { lat: 0.0, lon: 0.0, alt: 0.0 },
        grids: vec![g],
        terrain: Terrain::default(),
        landmarks: vec![],
        objects: vec![],
        pedestrians: vec![Pedestrian { id: "u".into(), path: vec![Vec3::new(-50.0, -50.0, 0.0)], speed: 0.0, is_user: true }],
        uav_start: UavState { position: Vec3::new(0.0, 0.0, 2.0), velocity: Vec3::zeros(), yaw: 0.0, mode: UavMode::StandbyHover },
        camera: camera(),
        limits: Limits { v_max: 3.0, a_max: 2.0, yaw_rate_max: PI / 2.0 },
        cruise_altitude: 5.0,
        hover_altitude: 2.0,
        knowledge: vec![],
    })
}

fn camera() -> CameraModel {
    CameraModel { fx: 300.0, fy: 300.0, cx: 320.0, cy: 240.0, width: 640, height: 480, extrinsic: Extrinsic::forward_looking(0.15) }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn raycast_matches_slab_oracle(
        seed in any::<u64>(),
        ox in 0.05f64..19.95, oy in 0.05f64..19.95,
        heading in -PI..PI, climb in -0.5f64..0.5,
        max_t in 1.0f64..40.0,
    ) {
        let mut g = random_grid(seed, 40, 40, 0.08);
        // Rescale to 0.5 m cells.
        g.geometry.resolution = 0.5;
        let w = bare_world(g.clone());
        let d = Vec3::new(heading.cos(), heading.sin(), climb).normalize();
        let o = Vec3::new(ox, oy, 2.0);
        // Rays that leave the grid are compared only up to the exit.
        let got = w.grid(GridKind::UavExploration).unwrap().first_hit(&o, &d, max_t);
        let want = slab_oracle(&g, &o, &d, max_t);
        match (got, want) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-9, "dda {a} slab {b}"),
            (None, None) => {}
            (a, b) => prop_assert!(false, "dda {a:?} slab {b:?}"),
        }
    }

    #[test]
    fn projection_round_trip(
        x in -50.0f64..50.0, y in -50.0f64..50.0, z in 0.0f64..30.0, yaw in -PI..PI,
        u in 0.0f64..640.0, v in 0.0f64..480.0, d in 0.2f64..200.0,
    ) {
        let cam = camera();
        let pose = Pose { position: Vec3::new(x, y, z), yaw };
        let p = cam.unproject(&pose, u, v, d);
        let (u2, v2, d2) = cam.project(&pose, &p).expect("point in front");
        prop_assert!((u - u2).abs() < 1e-6 && (v - v2).abs() < 1e-6 && (d - d2).abs() < 1e-6);
        let p2 = cam.unproject(&pose, u2, v2, d2);
        prop_assert!((p - p2).norm() < 1e-6);
    }

    #[test]
    fn gps_round_trip(
        lat in -60.0f64..60.0, lon in -179.0f64..179.0,
        x in -5000.0f64..5000.0, y in -5000.0f64..5000.0, z in -50.0f64..500.0,
    ) {
        let reference = GeoPoint { lat, lon, alt: 10.0 };
        let p = Vec3::new(x, y, z);
        let g = local_to_gps(&reference, &p).unwrap();
        let back = gps_to_local(&reference, &g).unwrap();
        prop_assert!((back - p).norm() < 1e-6);
        let again = local_to_gps(&reference, &back).unwrap();
        prop_assert!((again.lat - g.lat).abs() < 1e-9 && (again.lon - g.lon).abs() < 1e-9);
    }

    #[test]
    fn distance_field_matches_brute_force(seed in any::<u64>(), w in 1usize..25, h in 1usize..25, density in 0.0f64..0.3) {
        let g = random_grid(seed, w, h, density);
        let f = DistanceField::compute(&g);
        let occ: Vec<(usize, usize)> = (0..h).flat_map(|r| (0..w).map(move |c| (r, c))).filter(|&(r, c)| g.is_occupied(r, c)).collect();
        for r in 0..h {
            for c in 0..w {
                let want = occ
                    .iter()
                    .map(|&(orow, ocol)| ((r as f64 - orow as f64).powi(2) + (c as f64 - ocol as f64).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min);
                let got = f.at_cell(r, c);
                prop_assert!(got == want || (got - want).abs() < 1e-9, "({r},{c}) {got} vs {want}");
            }
        }
    }

    #[test]
    fn step_respects_limits(
        vx in -5.0f64..5.0, vy in -5.0f64..5.0, vz in -5.0f64..5.0,
        sx in -10.0f64..10.0, sy in -10.0f64..10.0, sz in -10.0f64..10.0,
        steps in 1usize..20,
    ) {
        let mut w = bare_world(grid(2, 2, 1.0));
        let v0 = Vec3::new(vx, vy, vz);
        w.uav.velocity = if v0.norm() > 3.0 { v0 * (3.0 / v0.norm()) } else { v0 };
        let control = airstar_core::world::Control::velocity(Vec3::new(sx, sy, sz), 0.0);
        for _ in 0..steps {
            let before = w.uav.velocity;
            w.step(&control, 0.1);
            prop_assert!(w.uav.velocity.norm() <= 3.0 + 1e-9);
            prop_assert!((w.uav.velocity - before).norm() <= 2.0 * 0.1 + 1e-9 || w.uav.position.z == 0.0);
        }
    }
}

const WORDS: [&str; 8] = ["court", "library", "sign", "tree", "car", "red", "bench", "gate"];

fn objects_strategy() -> impl Strategy<Value = Vec<(f64, f64, f64, usize, usize)>> {
    prop::collection::vec((-40.0f64..40.0, -40.0f64..40.0, 0.5f64..4.0, 0usize..8, 0usize..8), 1..10)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    /// The scan keeps the view the brute-force argmax picks: score every
    /// candidate heading independently, best score, ties to smaller |k| then
    /// smaller k.
    #[test]
    fn scan_argmax_equals_brute_force(
        objs in objects_strategy(),
        center in -PI..PI,
        noun_mask in 1u8..=255,
    ) {
        let mut w = bare_world(grid(2, 2, 1.0));
        w.scene_mut().objects = objs
            .iter()
            .enumerate()
            .map(|(i, &(x, y, s, a, b))| SceneObject {
                id: format!("o{i}"),
                class_tag: WORDS[a].to_string(),
                landmark_tags: vec![WORDS[b].to_string()],
                center: Vec3::new(x, y, s / 2.0),
                size: Vec3::new(s, s, s),
            })
            .collect();
        let nouns: Vec<String> = WORDS.iter().enumerate().filter(|(i, _)| noun_mask & (1 << i) != 0).map(|(_, w)| w.to_string()).collect();
        let cam = camera();
        let uav = w.uav;
        let got = scan_views(&w, &uav, &cam, center, &nouns, &MockScorer);

        let noun_set: BTreeSet<&str> = nouns.iter().map(String::as_str).collect();
        let mut best: Option<(f64, i32)> = None;
        for k in SCAN_OFFSETS {
            let yaw = center + k as f64 * PI / 18.0;
            let pose = UavState { yaw: body_yaw_for(&cam, yaw), ..uav };
            let score: f64 = render_objects(&w, &pose, &cam)
                .iter()
                .map(|o| {
                    let toks: BTreeSet<String> = o.tags().flat_map(tokenize).collect();
                    let n = toks.iter().filter(|t| noun_set.contains(t.as_str())).count() as f64;
                    let (u, _) = o.bbox_center();
                    n / (1.0 + ((u - cam.cx) / cam.fx).atan().abs())
                })
                .sum();
            let better = match best {
                None => true,
                Some((s, bk)) => score > s || (score == s && (k.abs(), k) < (bk.abs(), bk)),
            };
            if better {
                best = Some((score, k));
            }
        }
        let (score, k) = best.unwrap();
        match got {
            Ok(r) => {
                prop_assert_eq!(r.best.k, k);
                prop_assert!((r.best.score - score).abs() < 1e-12);
            }
            Err(SkillError::NoInformativeView) => prop_assert!(score <= 0.0),
            Err(e) => prop_assert!(false, "unexpected {e:?}"),
        }
    }
}

fn event_strategy() -> impl Strategy<Value = MissionEvent> {
    prop_oneof![
        Just(MissionEvent::Launch),
        Just(MissionEvent::HoverReached),
        Just(MissionEvent::Command),
        Just(MissionEvent::PlanAccepted),
        Just(MissionEvent::PlanningFailed),
        (0usize..5).prop_map(MissionEvent::StepStarted),
        Just(MissionEvent::StepFailed),
        Just(MissionEvent::PlanSucceeded),
        Just(MissionEvent::Abort),
        Just(MissionEvent::AttemptsExhausted),
        Just(MissionEvent::ReturnComplete),
        Just(MissionEvent::Acknowledge),
    ]
}

/// Allowed (from, to) pairs by state name.
fn legal(from: &str, to: &str) -> bool {
    matches!(
        (from, to),
        ("grounded", "ascending")
            | ("ascending", "standby_hover")
            | ("standby_hover", "planning")
            | ("planning", "executing")
            | ("planning", "replanning")
            | ("executing", "executing")
            | ("executing", "replanning")
            | ("executing", "returning")
            | ("replanning", "executing")
            | ("replanning", "replanning")
            | ("replanning", "mission_failed")
            | ("returning", "standby_hover")
            | ("mission_failed", "standby_hover")
    )
}

proptest! {
    #[test]
    fn random_event_sequences_stay_legal(events in prop::collection::vec(event_strategy(), 0..60)) {
        let mut s = MissionState::Grounded;
        for e in events {
            if let Ok(next) = transition(s, e) {
                prop_assert!(legal(s.name(), next.name()), "{s:?} --{e:?}--> {next:?}");
                s = next;
            }
        }
    }

    #[test]
    fn wire_round_trip(
        tick in any::<u32>(),
        x in -1e4f64..1e4, y in -1e4f64..1e4, z in 0.0f64..500.0, yaw in -PI..PI,
        text in "\\PC{0,40}",
        which in 0usize..5,
    ) {
        let pose = UavState { position: Vec3::new(x, y, z), velocity: Vec3::new(y / 1e4, x / 1e4, 0.0), yaw, mode: UavMode::Executing };
        let m = match which {
            0 => WireMessage::Telemetry { tick: tick as u64, pose, mode: pose.mode, mission_state: MissionState::Executing { step: 2 }, plan_id: Some(text.clone()) },
            1 => WireMessage::Command { text: text.clone() },
            2 => WireMessage::Click { u: x, v: y },
            3 => WireMessage::Event { level: EventLevel::Warn, text: text.clone(), replay: tick % 2 == 0 },
            _ => WireMessage::Route { map: "uav_autonomous".into(), waypoints: vec![pose.position], samples: vec![pose.position, pose.velocity] },
        };
        let line = encode(&m);
        prop_assert!(!line.contains('\n'));
        prop_assert_eq!(decode(&line).unwrap(), m);
    }

    /// Validation never panics, and anything it accepts names only
    /// registered tools with every required parameter present.
    #[test]
    fn plan_validation_fuzz(
        steps in prop::collection::vec((0usize..12, prop::collection::btree_map("[a-z_]{1,10}", 0u8..4, 0..4)), 0..6),
    ) {
        let names = ["geo_navigate", "announce_arrival", "return_to_user", "object_navigate", "track", "frame_human",
            "gesture_session", "gesture", "search_qa", "warp", "", "GEO_NAVIGATE"];
        let reg = registry();
        let doc = PlanDocument {
            plan_id: "p".into(),
            attempt: 0,
            steps: steps
                .iter()
                .map(|(t, params)| StepDocument {
                    tool: names[*t].to_string(),
                    params: params
                        .iter()
                        .map(|(k, v)| {
                            let val = match v { 0 => json!("library"), 1 => json!(3.5), 2 => json!(null), _ => json!(["x"]) };
                            (k.clone(), val)
                        })
                        .collect(),
                })
                .collect(),
        };
        if let Ok(plan) = validate(&doc, &reg) {
            for (call, step) in plan.steps.iter().zip(&doc.steps) {
                let schema = reg.iter().find(|t| t.name == step.tool);
                prop_assert!(schema.is_some());
                for p in schema.unwrap().params.iter().filter(|p| p.required) {
                    prop_assert!(call.params.contains_key(&p.name));
                }
            }
        }
    }
}
