//! Onboard tier: the 10 Hz control loop. It owns the simulated vehicle and
//! runs everything that must not wait on the station: setpoint tracking,
//! visual tracking, gesture clamping and raycast avoidance.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{Receiver, Sender, TryRecvError};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::config::OnboardConfig;
use crate::geonav::Trajectory;
use crate::mission::MissionState;
use crate::skills::{
    body_yaw_for, frame_human, gesture_offset, track_init, track_step, Direction, SkillError, TrackGains, TrackInit,
    TrackState,
};
use crate::world::{render_objects, wrap_angle, Command, Control, UavState, VisibleObject, World, TICK_DT};
use crate::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "by", rename_all = "snake_case")]
pub enum TrackSelector {
    Query { query: String },
    Click { u: f64, v: f64 },
}

/// Setpoint source requested by the station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Directive {
    /// Hold the current position and heading.
    Hold,
    HoldAt { position: Vec3, yaw: f64 },
    /// Climb or descend to `altitude` above the current position.
    Ascend { altitude: f64 },
    /// Follow a smoothed trajectory, or the waypoint polyline when smoothing
    /// failed.
    Follow { trajectory: Option<Trajectory>, waypoints: Vec<Vec3>, speed: f64 },
    GoTo { goal: Vec3, yaw: Option<f64>, speed: f64 },
    /// Turn in place to body yaw `yaw`.
    Face { yaw: f64 },
    Track { select: TrackSelector },
    FrameHuman,
    Gesture { dir: Direction, step: f64 },
}

/// Station to onboard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Uplink {
    Directive { seq: u64, directive: Directive },
    MissionState { state: MissionState },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum DirectiveStatus {
    Active,
    /// Avoidance zeroed the horizontal setpoint this tick.
    Blocked,
    Failed { error: SkillError },
}

/// Onboard to station, once per tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Downlink {
    pub tick: u64,
    /// Simulation time after this tick's step.
    pub time: f64,
    pub uav: UavState,
    pub control: Control,
    /// Frame captured at the start of the tick.
    pub objects: Vec<VisibleObject>,
    pub capture_pose: UavState,
    pub capture_time: f64,
    /// Position of the operator's phone.
    pub user_position: Vec3,
    /// Sequence number of the directive in force.
    pub seq: u64,
    pub status: DirectiveStatus,
    /// Position setpoint of the active directive, if it has one.
    pub target: Option<Vec3>,
    pub target_yaw: Option<f64>,
    pub track_target: Option<String>,
    pub link_lost: bool,
}

#[derive(Debug, Clone, PartialEq)]
enum Active {
    Hold { position: Vec3, yaw: f64 },
    Follow { trajectory: Option<Trajectory>, waypoints: Vec<Vec3>, next: usize, start_tick: u64, speed: f64 },
    GoTo { goal: Vec3, yaw: Option<f64>, speed: f64 },
    Track { state: TrackState },
}

#[derive(Debug, Clone)]
pub struct Onboard {
    pub world: World,
    camera: CameraModel,
    gains: TrackGains,
    cfg: OnboardConfig,
    active: Active,
    seq: u64,
    status: DirectiveStatus,
    link_lost: bool,
}

fn clamp_norm(v: Vec3, max: f64) -> Vec3 {
    let n = v.norm();
    if n > max {
        v * (max / n)
    } else {
        v
    }
}

impl Onboard {
    pub fn new(world: World, gains: TrackGains, cfg: OnboardConfig) -> Self {
        let camera = world.scene.camera;
        let active = Active::Hold { position: world.uav.position, yaw: world.uav.yaw };
        Self { world, camera, gains, cfg, active, seq: 0, status: DirectiveStatus::Active, link_lost: false }
    }

    pub fn uav(&self) -> &UavState {
        &self.world.uav
    }

    fn hold_here(&self) -> Active {
        Active::Hold { position: self.world.uav.position, yaw: self.world.uav.yaw }
    }

    /// Hold point of the active directive, or the current position.
    fn anchor(&self) -> (Vec3, f64) {
        match &self.active {
            Active::Hold { position, yaw } => (*position, *yaw),
            _ => (self.world.uav.position, self.world.uav.yaw),
        }
    }

    fn apply(&mut self, msg: Uplink) {
        match msg {
            Uplink::MissionState { state } => self.world.uav.mode = state.uav_mode(),
            Uplink::Directive { seq, directive } => {
                self.seq = seq;
                self.status = DirectiveStatus::Active;
                self.active = self.activate(directive);
            }
        }
    }

    fn fail(&mut self, error: SkillError) -> Active {
        self.status = DirectiveStatus::Failed { error };
        self.hold_here()
    }

    fn activate(&mut self, directive: Directive) -> Active {
        let uav = self.world.uav;
        match directive {
            Directive::Hold => self.hold_here(),
            Directive::HoldAt { position, yaw } => Active::Hold { position, yaw },
            Directive::Ascend { altitude } => {
                Active::Hold { position: Vec3::new(uav.position.x, uav.position.y, altitude), yaw: uav.yaw }
            }
            Directive::Follow { trajectory, waypoints, speed } => {
                Active::Follow { trajectory, waypoints, next: 0, start_tick: self.world.tick, speed }
            }
            Directive::GoTo { goal, yaw, speed } => Active::GoTo { goal, yaw, speed },
            Directive::Face { yaw } => Active::Hold { position: self.anchor().0, yaw },
            Directive::Track { select } => {
                let objects = render_objects(&self.world, &uav, &self.camera);
                let init = match &select {
                    TrackSelector::Query { query } => TrackInit::Instruction(query),
                    TrackSelector::Click { u, v } => TrackInit::Click { u: *u, v: *v },
                };
                match track_init(&objects, &uav, &self.camera, init, self.gains.standoff) {
                    Ok(state) => Active::Track { state },
                    Err(e) => self.fail(e),
                }
            }
            Directive::FrameHuman => match frame_human(&self.world, &uav, &self.camera) {
                Ok(f) => Active::GoTo { goal: f.goal, yaw: Some(f.target_yaw), speed: self.world.scene.limits.v_max },
                Err(e) => self.fail(e),
            },
            Directive::Gesture { dir, step } => {
                let (position, yaw) = self.anchor();
                let from = UavState { position, yaw, ..uav };
                let delta = gesture_offset(dir, step, &self.world, &from, &self.camera);
                Active::Hold { position: position + delta, yaw }
            }
        }
    }

    fn yaw_rate_to(&self, target: f64) -> f64 {
        self.cfg.yaw_gain * wrap_angle(target - self.world.uav.yaw)
    }

    fn toward(&self, goal: &Vec3, speed: f64) -> Vec3 {
        clamp_norm((goal - self.world.uav.position) * self.cfg.hold_gain, speed)
    }

    /// Body yaw that points the camera along horizontal `v`, if `v` is long
    /// enough to define a heading.
    fn heading_of(&self, v: &Vec3) -> Option<f64> {
        (v.x.hypot(v.y) > 0.3).then(|| body_yaw_for(&self.camera, v.y.atan2(v.x)))
    }

    fn control(&mut self, objects: &[VisibleObject]) -> Control {
        let uav = self.world.uav;
        let v_max = self.world.scene.limits.v_max;
        let mut active = std::mem::replace(&mut self.active, Active::Hold { position: uav.position, yaw: uav.yaw });
        let control = match &mut active {
            Active::Hold { position, yaw } => Control::velocity(self.toward(position, v_max), self.yaw_rate_to(*yaw)),
            Active::GoTo { goal, yaw, speed } => {
                let v = self.toward(goal, *speed);
                let target_yaw = yaw.or_else(|| self.heading_of(&(*goal - uav.position))).unwrap_or(uav.yaw);
                Control::velocity(v, self.yaw_rate_to(target_yaw))
            }
            Active::Follow { trajectory: Some(traj), start_tick, .. } => {
                let t = ((self.world.tick + 1 - *start_tick) as f64 * TICK_DT).min(traj.total_time);
                let (p, v, _) = traj.eval(t);
                let sp = clamp_norm(v + (p - uav.position) * self.cfg.follow_gain, v_max);
                let yaw = self.heading_of(&v).unwrap_or(uav.yaw);
                Control::velocity(sp, self.yaw_rate_to(yaw))
            }
            Active::Follow { trajectory: None, waypoints, next, speed, .. } => {
                while *next + 1 < waypoints.len() && (waypoints[*next] - uav.position).norm() < 0.5 {
                    *next += 1;
                }
                let goal = waypoints.get(*next).copied().unwrap_or(uav.position);
                let v = self.toward(&goal, *speed);
                let yaw = self.heading_of(&(goal - uav.position)).unwrap_or(uav.yaw);
                Control::velocity(v, self.yaw_rate_to(yaw))
            }
            Active::Track { state } => match track_step(state, objects, &uav, &self.world, &self.camera, &self.gains) {
                Ok((next, c)) => {
                    *state = next;
                    c
                }
                Err(error) => {
                    self.status = DirectiveStatus::Failed { error };
                    Control::hold()
                }
            },
        };
        if matches!(active, Active::Track { .. }) && matches!(self.status, DirectiveStatus::Failed { .. }) {
            active = self.hold_here();
        }
        self.active = active;
        control
    }

    /// Limits the horizontal setpoint to the speed from which the vehicle
    /// can still brake before the first obstacle along it, less the margin.
    /// Returns true when that leaves it effectively stopped.
    fn avoid(&self, control: &mut Control) -> bool {
        let Command::VelocitySetpoint(v) = control.command else { return false };
        let h = Vec3::new(v.x, v.y, 0.0);
        let speed = h.norm();
        if speed < 1e-6 {
            return false;
        }
        let limits = self.world.scene.limits;
        let reach = limits.v_max * limits.v_max / (2.0 * limits.a_max) + self.cfg.avoidance_margin + speed * TICK_DT;
        let Some(d) = self.world.raycast(&self.world.uav.position, &(h / speed), reach) else { return false };
        let allowed = (2.0 * limits.a_max * (d - self.cfg.avoidance_margin).max(0.0)).sqrt();
        if speed <= allowed {
            return false;
        }
        let h = h * (allowed / speed);
        control.command = Command::VelocitySetpoint(Vec3::new(h.x, h.y, v.z));
        allowed < 0.05
    }

    fn target(&self) -> (Option<Vec3>, Option<f64>) {
        match &self.active {
            Active::Hold { position, yaw } => (Some(*position), Some(*yaw)),
            Active::GoTo { goal, yaw, .. } => (Some(*goal), *yaw),
            Active::Follow { waypoints, .. } => (waypoints.last().copied(), None),
            Active::Track { .. } => (None, None),
        }
    }

    /// One control tick. `connected == false` means the station link is
    /// down: the vehicle is commanded to zero velocity until it returns,
    /// then holds where it is until the next directive.
    pub fn tick(&mut self, inbox: impl IntoIterator<Item = Uplink>, connected: bool) -> Downlink {
        if connected && self.link_lost {
            self.link_lost = false;
            self.active = self.hold_here();
        }
        if !connected {
            self.link_lost = true;
        }
        for msg in inbox {
            self.apply(msg);
        }
        let capture_pose = self.world.uav;
        let capture_time = self.world.time;
        let objects = render_objects(&self.world, &capture_pose, &self.camera);
        let mut control = if self.link_lost { Control::hold() } else { self.control(&objects) };
        let blocked = self.avoid(&mut control);
        if !matches!(self.status, DirectiveStatus::Failed { .. }) {
            self.status = if blocked { DirectiveStatus::Blocked } else { DirectiveStatus::Active };
        }
        self.world.step(&control, TICK_DT);
        let (target, target_yaw) = self.target();
        Downlink {
            tick: self.world.tick,
            time: self.world.time,
            uav: self.world.uav,
            control,
            objects,
            capture_pose,
            capture_time,
            user_position: self.world.user_position(),
            seq: self.seq,
            status: self.status.clone(),
            target,
            target_yaw,
            track_target: match &self.active {
                Active::Track { state } => Some(state.target_id.clone()),
                _ => None,
            },
            link_lost: self.link_lost,
        }
    }
}

/// Onboard side of the station link. Both calls must return immediately.
pub trait OnboardLink {
    /// Messages received since the last poll, and whether the link is up.
    fn poll(&mut self) -> (Vec<Uplink>, bool);
    fn send(&mut self, msg: Downlink);
}

/// In-process link over standard channels; a dropped sender counts as link
/// loss.
pub struct ChannelLink {
    pub rx: Receiver<Uplink>,
    pub tx: Sender<Downlink>,
}

impl OnboardLink for ChannelLink {
    fn poll(&mut self) -> (Vec<Uplink>, bool) {
        let mut out = vec![];
        loop {
            match self.rx.try_recv() {
                Ok(m) => out.push(m),
                Err(TryRecvError::Empty) => return (out, true),
                Err(TryRecvError::Disconnected) => return (out, false),
            }
        }
    }

    fn send(&mut self, msg: Downlink) {
        let _ = self.tx.send(msg);
    }
}

/// Runs the tick loop against the wall clock with a fixed `period`, until
/// `stop` is set or `max_ticks` ticks have run. Deadlines are absolute, so a
/// slow tick does not shift later ones. Returns each tick's start instant.
pub fn run_realtime(
    onboard: &mut Onboard,
    link: &mut impl OnboardLink,
    period: Duration,
    max_ticks: Option<u64>,
    stop: &AtomicBool,
) -> Vec<Instant> {
    let start = Instant::now();
    let mut starts = vec![];
    let mut k: u32 = 0;
    while !stop.load(Ordering::Relaxed) && max_ticks.is_none_or(|m| (k as u64) < m) {
        let deadline = start + period * k;
        let now = Instant::now();
        if deadline > now {
            std::thread::sleep(deadline - now);
        }
        starts.push(Instant::now());
        let (inbox, connected) = link.poll();
        let report = onboard.tick(inbox, connected);
        link.send(report);
        k += 1;
    }
    starts
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use super::*;
    use crate::camera::Extrinsic;
    use crate::world::{GeoPoint, GridGeometry, GridKind, Limits, OccupancyGrid, Pedestrian, Scene, Terrain, UavMode};

    fn world() -> World {
        World::new(Scene {
            seed: 0,
            reference: GeoPoint { lat: 0.0, lon: 0.0, alt: 0.0 },
            grids: vec![OccupancyGrid::new(
                GridKind::UavExploration,
                GridGeometry { origin: [-20.0, -20.0], resolution: 0.5, width: 80, height: 80 },
            )],
            terrain: Terrain::default(),
            landmarks: vec![],
            objects: vec![],
            pedestrians: vec![Pedestrian { id: "u".into(), path: vec![Vec3::new(6.0, 0.0, 0.0)], speed: 0.0, is_user: true }],
            uav_start: UavState { position: Vec3::new(0.0, 0.0, 3.0), velocity: Vec3::zeros(), yaw: 0.0, mode: UavMode::StandbyHover },
            camera: CameraModel { fx: 160.0, fy: 160.0, cx: 160.0, cy: 120.0, width: 320, height: 240, extrinsic: Extrinsic::forward_looking(0.3) },
            limits: Limits { v_max: 3.0, a_max: 2.0, yaw_rate_max: FRAC_PI_2 },
            cruise_altitude: 5.0,
            hover_altitude: 3.0,
            knowledge: vec![],
        })
    }

    fn onboard() -> Onboard {
        Onboard::new(world(), TrackGains::default(), OnboardConfig::default())
    }

    fn directive(seq: u64, directive: Directive) -> Uplink {
        Uplink::Directive { seq, directive }
    }

    #[test]
    fn silent_station_holds_position() {
        let mut ob = onboard();
        let start = ob.uav().position;
        for _ in 0..50 {
            ob.tick([], true);
        }
        assert!((ob.uav().position - start).norm() < 1e-12);
    }

    #[test]
    fn goto_reaches_goal() {
        let mut ob = onboard();
        let goal = Vec3::new(5.0, 2.0, 4.0);
        ob.tick([directive(1, Directive::GoTo { goal, yaw: None, speed: 3.0 })], true);
        for _ in 0..150 {
            ob.tick([], true);
        }
        assert!((ob.uav().position - goal).norm() < 0.05);
    }

    #[test]
    fn link_loss_zeroes_setpoint_on_the_next_tick() {
        let mut ob = onboard();
        ob.tick([directive(1, Directive::GoTo { goal: Vec3::new(15.0, 0.0, 3.0), yaw: None, speed: 3.0 })], true);
        for _ in 0..20 {
            ob.tick([], true);
        }
        assert!(ob.uav().velocity.norm() > 1.0);
        let d = ob.tick([], false);
        assert!(d.link_lost);
        assert_eq!(d.control.command, Command::VelocitySetpoint(Vec3::zeros()));
        // Reconnect: hold where it stopped rather than resume.
        for _ in 0..30 {
            ob.tick([], false);
        }
        let d = ob.tick([], true);
        assert_eq!(d.target, Some(d.capture_pose.position));
    }

    #[test]
    fn avoidance_stops_at_wall() {
        let mut w = world();
        w.scene_mut().grids[0].fill_rect([4.0, -5.0], [5.0, 5.0]);
        let mut ob = Onboard::new(w, TrackGains::default(), OnboardConfig::default());
        ob.tick([directive(1, Directive::GoTo { goal: Vec3::new(10.0, 0.0, 3.0), yaw: None, speed: 3.0 })], true);
        let mut blocked = false;
        for _ in 0..100 {
            let d = ob.tick([], true);
            blocked |= d.status == DirectiveStatus::Blocked;
        }
        assert!(blocked);
        assert!(ob.uav().position.x < 4.0);
    }

    #[test]
    fn gesture_moves_hold_point() {
        let mut ob = onboard();
        let d = ob.tick([directive(1, Directive::Gesture { dir: Direction::Up, step: 0.5 })], true);
        assert_eq!(d.target, Some(Vec3::new(0.0, 0.0, 3.5)));
    }

    #[test]
    fn track_without_match_fails() {
        let mut ob = onboard();
        let d = ob.tick([directive(1, Directive::Track { select: TrackSelector::Query { query: "bicycle".into() } })], true);
        assert_eq!(d.status, DirectiveStatus::Failed { error: SkillError::NoTarget });
    }

    #[test]
    fn directive_round_trips_as_json() {
        let m = directive(7, Directive::Track { select: TrackSelector::Click { u: 10.0, v: 20.0 } });
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<Uplink>(&s).unwrap(), m);
    }
}
