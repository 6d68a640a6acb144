//! Station tier: owns the mission state machine, the planner and knowledge
//! base, and runs each plan step as a monitor over onboard tick reports.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::config::Config;
use crate::geonav::{
    default_clearance, gps_to_local, lookup_landmark, nearest_free, plan_route, DistanceField, MissionKind,
    SmoothingLimits,
};
use crate::knowledge::{perception_summary, KnowledgeStore};
use crate::mission::{transition, MissionEvent, MissionState};
use crate::objectnav::{object_nav_goal, GroundingBackend, MockGrounding, ObjectNavError};
use crate::onboard::{Directive, DirectiveStatus, Downlink, TrackSelector, Uplink};
use crate::planner::{
    registry, run_mission, FailureCause, MissionHost, MissionOutcome, MockPlanner, Plan, PlannerBackend, PlannerError,
    SkillCall, SkillExecutor, StepResult, StepStatus, ToolSchema,
};
use crate::skills::{
    candidate_yaw, landmark_nouns, scan_with, Direction, MockQa, MockScorer, QaBackend, SkillError,
    ViewScorer,
};
use crate::wire::{EventLevel, WireMessage};
use crate::world::{render_view, wrap_angle, LandmarkNode, OccupancyGrid, Scene, VisibleObject, World};
use crate::Vec3;

/// Transport seen by the station.
pub trait StationIo {
    fn send(&mut self, msg: Uplink);
    /// Blocks until the next onboard tick report. `None` once the onboard
    /// link is gone.
    fn recv(&mut self) -> Option<Downlink>;
    /// Broadcast to every connected client (and the record, if any).
    fn publish(&mut self, msg: WireMessage);
    /// Next pending client message, without blocking.
    fn poll_client(&mut self) -> Option<WireMessage>;
}

/// External-model slots.
#[derive(Clone)]
pub struct Backends {
    pub planner: Arc<dyn PlannerBackend + Send + Sync>,
    pub grounding: Arc<dyn GroundingBackend + Send + Sync>,
    pub scorer: Arc<dyn ViewScorer + Send + Sync>,
    pub qa: Arc<dyn QaBackend + Send + Sync>,
}

impl Backends {
    pub fn mock(scene: &Scene, cfg: &Config) -> Self {
        Self {
            planner: Arc::new(MockPlanner::new(scene.landmarks.clone(), cfg.budgets)),
            grounding: Arc::new(MockGrounding),
            scorer: Arc::new(MockScorer),
            qa: Arc::new(MockQa::new(scene.landmarks.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteRecord {
    pub map: MissionKind,
    /// Smallest distance-field clearance over the sampled route.
    pub clearance: f64,
    pub c_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissionResult {
    Succeeded,
    Aborted,
    Failed,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionSummary {
    pub instruction: String,
    pub result: MissionResult,
    pub attempts: usize,
    pub start_tick: u64,
    pub end_tick: u64,
    pub path_length: f64,
    pub routes: Vec<RouteRecord>,
    pub answers: Vec<String>,
    pub final_state: MissionState,
}

impl MissionSummary {
    pub fn replans(&self) -> usize {
        self.attempts.saturating_sub(1)
    }
}

/// Maps a skill error reported by the onboard tier to a plan failure cause.
pub fn failure_cause(e: &SkillError) -> FailureCause {
    match e {
        SkillError::TargetLost => FailureCause::TargetLost,
        SkillError::BackendUnavailable(_) => FailureCause::BackendUnavailable,
        SkillError::NoHumanVisible
        | SkillError::NoTarget
        | SkillError::DegenerateGeometry
        | SkillError::NoInformativeView => FailureCause::NoTarget,
    }
}

/// `target` if it is free in `grid`, else the nearest free cell center
/// within 15 m (same altitude).
fn approach_point(grid: &OccupancyGrid, target: &Vec3) -> Option<Vec3> {
    let cell = grid.geometry.cell_of(target)?;
    if !grid.is_occupied(cell.0, cell.1) {
        return Some(*target);
    }
    let rings = (15.0 / grid.resolution()).ceil() as usize;
    let free = nearest_free(grid, cell, rings)?;
    let c = grid.geometry.cell_center(free.0, free.1);
    Some(Vec3::new(c.x, c.y, target.z))
}

struct Core<Io> {
    io: Io,
    cfg: Config,
    scene: Arc<Scene>,
    camera: CameraModel,
    backends: Backends,
    state: MissionState,
    plan: Option<Plan>,
    step: Option<String>,
    last: Option<Downlink>,
    seq: u64,
    abort_requested: bool,
    pending: VecDeque<WireMessage>,
    last_gesture_tick: u64,
    odometer: f64,
    routes: Vec<RouteRecord>,
    answers: Vec<String>,
    link_up: bool,
}

impl<Io: StationIo> Core<Io> {
    fn tick(&self) -> u64 {
        self.last.as_ref().map_or(0, |d| d.tick)
    }

    fn event(&mut self, level: EventLevel, text: impl Into<String>) {
        self.io.publish(WireMessage::event(level, text));
    }

    fn fire(&mut self, ev: MissionEvent) {
        match transition(self.state, ev) {
            Ok(next) => {
                if next.name() != self.state.name() {
                    let text = format!("mission_state {} -> {}", self.state.name(), next.name());
                    self.event(EventLevel::Info, text);
                }
                self.state = next;
                self.io.send(Uplink::MissionState { state: next });
            }
            Err(e) => self.event(EventLevel::Error, e.to_string()),
        }
    }

    fn direct(&mut self, directive: Directive) {
        self.seq += 1;
        self.io.send(Uplink::Directive { seq: self.seq, directive });
    }

    fn is_idle(&self) -> bool {
        matches!(self.state, MissionState::Grounded | MissionState::StandbyHover | MissionState::MissionFailed)
    }

    fn route_client(&mut self, msg: WireMessage) {
        if !msg.is_client() {
            self.event(EventLevel::Error, format!("unexpected message type from client: {}", msg.type_name()));
            return;
        }
        if self.is_idle() {
            self.pending.push_back(msg);
            return;
        }
        match msg {
            WireMessage::Abort {} if matches!(self.state, MissionState::Executing { .. }) => {
                self.abort_requested = true;
                self.event(EventLevel::Info, "abort requested");
            }
            WireMessage::Abort {} => {
                let text = format!("abort not accepted while {}", self.state.name());
                self.event(EventLevel::Warn, text);
            }
            WireMessage::Command { .. } => self.event(EventLevel::Error, "mission in progress; command rejected"),
            WireMessage::Click { u, v } if self.step.as_deref() == Some("track") => {
                self.direct(Directive::Track { select: TrackSelector::Click { u, v } });
                self.event(EventLevel::Info, format!("tracking re-initialized at ({u:.0}, {v:.0})"));
            }
            WireMessage::Gesture { dir } if self.step.as_deref() == Some("gesture_session") => {
                self.direct(Directive::Gesture { dir, step: self.cfg.gesture_step });
                self.last_gesture_tick = self.tick();
            }
            other => {
                let text = format!("{} ignored during {}", other.type_name(), self.step.as_deref().unwrap_or("mission"));
                self.event(EventLevel::Warn, text);
            }
        }
    }

    /// Waits for the next tick report, relays it to clients and routes any
    /// client messages that arrived meanwhile.
    fn next_tick(&mut self) -> Option<Downlink> {
        let Some(d) = self.io.recv() else {
            if std::mem::replace(&mut self.link_up, false) {
                self.event(EventLevel::Error, "onboard link lost");
            }
            return None;
        };
        if let Some(prev) = &self.last {
            self.odometer += (d.uav.position - prev.uav.position).norm();
        }
        self.io.publish(WireMessage::Telemetry {
            tick: d.tick,
            pose: d.uav,
            mode: d.uav.mode,
            mission_state: self.state,
            plan_id: self.plan.as_ref().map(|p| p.plan_id.clone()),
        });
        self.io.publish(WireMessage::FrameMeta {
            tick: d.tick,
            objects: d.objects.clone(),
            camera: self.camera,
            pose_at_capture: d.capture_pose,
        });
        self.last = Some(d.clone());
        while let Some(m) = self.io.poll_client() {
            self.route_client(m);
        }
        Some(d)
    }

    fn link_failure(&self, start: u64) -> StepResult {
        StepResult::failed(FailureCause::BackendUnavailable, start, self.tick(), "onboard link lost")
    }

    /// Runs ticks until `done` reports a result, the directive fails, the
    /// vehicle stays blocked, an abort arrives or `budget` ticks pass.
    fn monitor<F>(&mut self, start: u64, budget: u64, mut done: F) -> StepResult
    where
        F: FnMut(&mut Self, &Downlink) -> Option<StepResult>,
    {
        let mut blocked = 0;
        loop {
            let Some(d) = self.next_tick() else { return self.link_failure(start) };
            if std::mem::take(&mut self.abort_requested) {
                return StepResult::aborted(start, d.tick);
            }
            if d.seq == self.seq {
                match &d.status {
                    DirectiveStatus::Failed { error } => {
                        return StepResult::failed(failure_cause(error), start, d.tick, error.to_string());
                    }
                    DirectiveStatus::Blocked => {
                        blocked += 1;
                        if blocked >= self.cfg.blocked_ticks {
                            return StepResult::failed(FailureCause::Blocked, start, d.tick, "obstacle ahead");
                        }
                    }
                    DirectiveStatus::Active => blocked = 0,
                }
                if let Some(r) = done(self, &d) {
                    return r;
                }
            }
            if d.tick.saturating_sub(start) >= budget {
                return StepResult::failed(FailureCause::Timeout, start, d.tick, format!("exceeded {budget} ticks"));
            }
        }
    }

    fn altitude_for(&self, map: MissionKind) -> f64 {
        match map {
            MissionKind::UavAutonomous => self.scene.cruise_altitude,
            MissionKind::PedestrianGuide => self.scene.hover_altitude,
        }
    }

    fn position(&self) -> Vec3 {
        self.last.as_ref().map_or(self.scene.uav_start.position, |d| d.uav.position)
    }

    /// Plans a route on `map` to `target` and follows it until within `tol`.
    fn fly(&mut self, map: MissionKind, target: Vec3, altitude: f64, start: u64, budget: u64, tol: f64) -> StepResult {
        let scene = Arc::clone(&self.scene);
        let Some(grid) = scene.grid(map.grid_kind()) else {
            return StepResult::failed(FailureCause::NoPath, start, start, format!("no {} map", map.as_str()));
        };
        let Some(goal) = approach_point(grid, &target) else {
            return StepResult::failed(FailureCause::NoPath, start, start, "goal outside the map");
        };
        let speed = match map {
            MissionKind::PedestrianGuide => self.cfg.guide_speed.min(scene.limits.v_max),
            MissionKind::UavAutonomous => scene.limits.v_max,
        };
        let c_min = default_clearance(grid.kind);
        let limits = SmoothingLimits { v_max: speed, a_max: scene.limits.a_max, c_min };
        let route = match plan_route(grid, &self.position(), &goal, altitude, &limits) {
            Ok(r) => r,
            Err(e) => return StepResult::failed(FailureCause::NoPath, start, start, format!("{} map: {e}", map.as_str())),
        };
        let samples = route.trajectory.as_ref().map_or_else(|| route.waypoints.clone(), |t| t.sampled_polyline());
        let field = DistanceField::compute(grid);
        let clearance = samples.iter().map(|p| field.clearance_at(p)).fold(f64::INFINITY, f64::min);
        self.routes.push(RouteRecord { map, clearance, c_min });
        self.io.publish(WireMessage::Route { map: map.as_str().into(), waypoints: route.waypoints.clone(), samples });
        let end = *route.waypoints.last().expect("routes have endpoints");
        self.direct(Directive::Follow { trajectory: route.trajectory, waypoints: route.waypoints, speed });
        self.monitor(start, budget, move |_, d| {
            ((d.uav.position - end).norm() <= tol).then(|| StepResult::succeeded(start, d.tick))
        })
    }

    fn landmark_param(&self, call: &SkillCall) -> Result<LandmarkNode, String> {
        let name = call.str_param("landmark").unwrap_or_default();
        lookup_landmark(&self.scene.landmarks, name).cloned().map_err(|e| e.to_string())
    }

    fn geo_navigate(&mut self, call: &SkillCall, budget: u64) -> StepResult {
        let start = self.tick();
        let lm = match self.landmark_param(call) {
            Ok(lm) => lm,
            Err(e) => return StepResult::failed(FailureCause::NoTarget, start, start, e),
        };
        let map = call.str_param("map").and_then(MissionKind::parse).unwrap_or(MissionKind::UavAutonomous);
        let target = match gps_to_local(&self.scene.reference, &lm.gps) {
            Ok(p) => p,
            Err(e) => return StepResult::failed(FailureCause::NoPath, start, start, e.to_string()),
        };
        self.fly(map, target, self.altitude_for(map), start, budget, self.cfg.geo_tolerance)
    }

    /// A point `return_offset` from the user, on the UAV's side.
    fn return_goal(&self) -> Vec3 {
        let uav = self.position();
        let user = self.last.as_ref().map_or(self.scene.user().position_at(0.0), |d| d.user_position);
        let h = Vec3::new(uav.x - user.x, uav.y - user.y, 0.0);
        let dir = if h.norm() > 1e-6 { h / h.norm() } else { Vec3::x() };
        let g = user + dir * self.cfg.return_offset;
        Vec3::new(g.x, g.y, self.scene.hover_altitude)
    }

    fn return_to_user(&mut self, call: &SkillCall, budget: u64) -> StepResult {
        let start = self.tick();
        let map = call.str_param("map").and_then(MissionKind::parse).unwrap_or(MissionKind::PedestrianGuide);
        let goal = self.return_goal();
        self.fly(map, goal, goal.z, start, budget, self.cfg.geo_tolerance)
    }

    /// The most recent geo_navigate landmark before step `index`.
    fn plan_landmark(&self, index: usize) -> Option<String> {
        let plan = self.plan.as_ref()?;
        plan.steps[..index.min(plan.steps.len())]
            .iter()
            .rev()
            .find(|s| s.tool == "geo_navigate")
            .and_then(|s| s.str_param("landmark").map(str::to_string))
    }

    fn announce_arrival(&mut self, index: usize) -> StepResult {
        let start = self.tick();
        let name = self
            .plan_landmark(index)
            .and_then(|n| lookup_landmark(&self.scene.landmarks, &n).ok().map(|l| l.name.clone()))
            .unwrap_or_else(|| "the destination".into());
        self.event(EventLevel::Info, format!("Arrived at {name}."));
        match self.next_tick() {
            Some(d) => StepResult::succeeded(start, d.tick),
            None => self.link_failure(start),
        }
    }

    /// The world as the onboard tier saw it when `d` was captured.
    fn mirror(&self, d: &Downlink) -> World {
        let mut w = World {
            scene: Arc::clone(&self.scene),
            uav: d.capture_pose,
            pedestrian_positions: vec![Vec3::zeros(); self.scene.pedestrians.len()],
            time: 0.0,
            tick: 0,
        };
        w.set_time(d.capture_time, d.tick.saturating_sub(1));
        w
    }

    fn object_navigate(&mut self, call: &SkillCall, budget: u64) -> StepResult {
        let start = self.tick();
        let instruction = call.str_param("instruction").unwrap_or_default().to_string();
        let Some(d) = self.last.clone() else { return self.link_failure(start) };
        let frame = render_view(&self.mirror(&d), &d.capture_pose, &self.camera);
        let goal = match object_nav_goal(
            &instruction,
            &frame,
            &self.camera,
            &d.capture_pose,
            self.cfg.object_standoff,
            self.cfg.object_z_min,
            &*self.backends.grounding,
        ) {
            Ok(g) => g,
            Err(e) => {
                let cause = match e {
                    ObjectNavError::BackendUnavailable(_) => FailureCause::BackendUnavailable,
                    _ => FailureCause::NoTarget,
                };
                return StepResult::failed(cause, start, start, e.to_string());
            }
        };
        self.direct(Directive::GoTo { goal, yaw: None, speed: self.scene.limits.v_max });
        let tol = self.cfg.object_tolerance;
        self.monitor(start, budget, move |_, d| {
            ((d.uav.position - goal).norm() <= tol).then(|| StepResult::succeeded(start, d.tick))
        })
    }

    fn track(&mut self, call: &SkillCall, budget: u64) -> StepResult {
        let start = self.tick();
        let query = call.str_param("query").unwrap_or_default().to_string();
        let duration = call.num_param("duration").unwrap_or(self.cfg.budgets.track_default_duration_s);
        let ticks = (duration * 10.0).ceil().max(1.0) as u64;
        self.direct(Directive::Track { select: TrackSelector::Query { query } });
        let r = self.monitor(start, budget, move |_, d| {
            (d.tick.saturating_sub(start) >= ticks).then(|| StepResult::succeeded(start, d.tick))
        });
        self.direct(Directive::Hold);
        r
    }

    fn frame_human(&mut self, budget: u64) -> StepResult {
        let start = self.tick();
        self.direct(Directive::FrameHuman);
        self.monitor(start, budget, move |_, d| match (d.target, d.target_yaw) {
            (Some(g), Some(y)) if (d.uav.position - g).norm() <= 0.3 && wrap_angle(d.uav.yaw - y).abs() <= 0.05 => {
                Some(StepResult::succeeded(start, d.tick))
            }
            _ => None,
        })
    }

    fn gesture_session(&mut self, budget: u64) -> StepResult {
        let start = self.tick();
        self.direct(Directive::Hold);
        self.last_gesture_tick = start;
        self.event(EventLevel::Info, "gesture session open");
        let idle = self.cfg.gesture_idle_ticks;
        let r = self.monitor(start, budget, move |core, d| {
            (d.tick.saturating_sub(core.last_gesture_tick) >= idle).then(|| StepResult::succeeded(start, d.tick))
        });
        if r.outcome == crate::planner::Outcome::Succeeded {
            self.event(EventLevel::Info, "photo captured");
        }
        r
    }

    fn gesture(&mut self, call: &SkillCall, budget: u64) -> StepResult {
        let start = self.tick();
        let Some(dir) = call.str_param("dir").and_then(Direction::parse) else {
            return StepResult::failed(FailureCause::NoTarget, start, start, "unknown direction");
        };
        let step = call.num_param("step").unwrap_or(self.cfg.gesture_step);
        self.direct(Directive::Gesture { dir, step });
        self.monitor(start, budget, move |_, d| match d.target {
            Some(g) if (d.uav.position - g).norm() <= 0.1 => Some(StepResult::succeeded(start, d.tick)),
            _ => None,
        })
    }

    /// Turns to `body_yaw` and returns the first frame captured there.
    fn look(&mut self, body_yaw: f64, start: u64, budget: u64) -> Result<Vec<VisibleObject>, StepResult> {
        self.direct(Directive::Face { yaw: body_yaw });
        loop {
            let Some(d) = self.next_tick() else { return Err(self.link_failure(start)) };
            if std::mem::take(&mut self.abort_requested) {
                return Err(StepResult::aborted(start, d.tick));
            }
            if d.seq == self.seq && wrap_angle(d.capture_pose.yaw - body_yaw).abs() <= 0.01 {
                return Ok(d.objects);
            }
            if d.tick.saturating_sub(start) >= budget {
                return Err(StepResult::failed(FailureCause::Timeout, start, d.tick, format!("exceeded {budget} ticks")));
            }
        }
    }

    fn search_qa(&mut self, index: usize, call: &SkillCall, budget: u64) -> StepResult {
        let start = self.tick();
        let question = call.str_param("question").unwrap_or_default().to_string();
        let lm = self
            .plan_landmark(index)
            .and_then(|n| lookup_landmark(&self.scene.landmarks, &n).ok().cloned())
            .or_else(|| lookup_landmark(&self.scene.landmarks, &question).ok().cloned());
        let Some(lm) = lm else {
            return StepResult::failed(FailureCause::NoTarget, start, start, "no landmark for the question");
        };
        let Some(d) = self.last.clone() else { return self.link_failure(start) };
        let camera = self.camera;
        let center = candidate_yaw(&lm, &d.uav, &self.scene.reference).unwrap_or_else(|_| {
            // Already over the landmark: scan around the current heading.
            let f = camera.horizontal_forward_body();
            wrap_angle(d.uav.yaw + f.y.atan2(f.x))
        });
        let nouns = landmark_nouns(&format!("{question} {}", lm.name));
        let scorer = Arc::clone(&self.backends.scorer);
        let mut interrupted = None;
        let scan = scan_with(&camera, center, &nouns, &*scorer, |yaw| {
            self.look(yaw, start, budget).map_err(|r| {
                interrupted = Some(r);
                SkillError::BackendUnavailable("scan interrupted".into())
            })
        });
        if let Some(r) = interrupted {
            return r;
        }
        let view = match scan {
            Ok(v) => v,
            Err(e) => return StepResult::failed(failure_cause(&e), start, self.tick(), e.to_string()),
        };
        if let Err(r) = self.look(view.body_yaw, start, budget) {
            return r;
        }
        let answer = match self.backends.qa.answer(&question, &view.objects) {
            Ok(a) => a,
            Err(e) => return StepResult::failed(failure_cause(&e), start, self.tick(), e.to_string()),
        };
        self.answers.push(answer.clone());
        self.io.publish(WireMessage::Answer { text: answer });
        StepResult::succeeded(start, self.tick())
    }

    /// Flies back near the user, on the walkway map when possible.
    fn return_home(&mut self) {
        let start = self.tick();
        let goal = self.return_goal();
        let budget = self.cfg.budgets.return_to_user;
        let tol = self.cfg.geo_tolerance;
        let mut r = self.fly(MissionKind::PedestrianGuide, goal, goal.z, start, budget, tol);
        if r.cause == Some(FailureCause::NoPath) {
            r = self.fly(MissionKind::UavAutonomous, goal, goal.z, start, budget, tol);
        }
        if r.outcome != crate::planner::Outcome::Succeeded {
            self.event(EventLevel::Warn, format!("return incomplete ({}); holding position", r.detail));
            self.direct(Directive::Hold);
        }
    }
}

impl<Io: StationIo> SkillExecutor for Core<Io> {
    fn run_step(&mut self, index: usize, call: &SkillCall, budget: u64) -> StepResult {
        self.step = Some(call.tool.clone());
        let r = match call.tool.as_str() {
            "geo_navigate" => self.geo_navigate(call, budget),
            "announce_arrival" => self.announce_arrival(index),
            "return_to_user" => self.return_to_user(call, budget),
            "object_navigate" => self.object_navigate(call, budget),
            "track" => self.track(call, budget),
            "frame_human" => self.frame_human(budget),
            "gesture_session" => self.gesture_session(budget),
            "gesture" => self.gesture(call, budget),
            "search_qa" => self.search_qa(index, call, budget),
            other => {
                let t = self.tick();
                StepResult::failed(FailureCause::NoTarget, t, t, format!("no executor for {other}"))
            }
        };
        self.step = None;
        r
    }

    fn on_step(&mut self, index: usize, status: StepStatus, cause: Option<FailureCause>) {
        if let Some(step) = self.plan.as_mut().and_then(|p| p.steps.get_mut(index)) {
            step.status = status;
        }
        if status == StepStatus::Running {
            self.fire(MissionEvent::StepStarted(index));
        }
        self.io.publish(WireMessage::StepUpdate { index, status, cause });
    }
}

impl<Io: StationIo> MissionHost for Core<Io> {
    fn perception(&mut self) -> String {
        self.last.as_ref().map_or_else(String::new, |d| perception_summary(&d.objects))
    }

    fn on_event(&mut self, event: MissionEvent) {
        self.fire(event);
    }

    fn on_plan(&mut self, plan: &Plan) {
        self.plan = Some(plan.clone());
        self.io.publish(WireMessage::Plan { plan: plan.document() });
    }

    fn on_planning_error(&mut self, err: &PlannerError) {
        self.event(EventLevel::Warn, format!("planning failed: {err}"));
    }
}

/// The station service: state machine, planner, knowledge base and step
/// monitors over a [`StationIo`] transport.
pub struct Station<Io> {
    core: Core<Io>,
    kb: KnowledgeStore,
    registry: Vec<ToolSchema>,
    summaries: Vec<MissionSummary>,
}

impl<Io: StationIo> Station<Io> {
    pub fn new(io: Io, scene: Arc<Scene>, cfg: Config, backends: Backends, kb: KnowledgeStore) -> Self {
        let core = Core {
            io,
            camera: scene.camera,
            scene,
            cfg,
            backends,
            state: MissionState::Grounded,
            plan: None,
            step: None,
            last: None,
            seq: 0,
            abort_requested: false,
            pending: VecDeque::new(),
            last_gesture_tick: 0,
            odometer: 0.0,
            routes: vec![],
            answers: vec![],
            link_up: true,
        };
        Self { core, kb, registry: registry(), summaries: vec![] }
    }

    pub fn state(&self) -> MissionState {
        self.core.state
    }

    pub fn io(&self) -> &Io {
        &self.core.io
    }

    pub fn io_mut(&mut self) -> &mut Io {
        &mut self.core.io
    }

    pub fn into_io(self) -> Io {
        self.core.io
    }

    pub fn knowledge(&self) -> &KnowledgeStore {
        &self.kb
    }

    pub fn summaries(&self) -> &[MissionSummary] {
        &self.summaries
    }

    pub fn last_report(&self) -> Option<&Downlink> {
        self.core.last.as_ref()
    }

    /// Climbs to the hover altitude and enters standby. False if the climb
    /// did not finish.
    pub fn launch(&mut self) -> bool {
        let core = &mut self.core;
        core.fire(MissionEvent::Launch);
        let altitude = core.scene.hover_altitude;
        core.direct(Directive::Ascend { altitude });
        let start = core.tick();
        let r = core.monitor(start, 600, move |_, d| {
            ((d.uav.position.z - altitude).abs() <= 0.05 && d.uav.velocity.norm() <= 0.05)
                .then(|| StepResult::succeeded(start, d.tick))
        });
        if r.outcome == crate::planner::Outcome::Succeeded {
            core.fire(MissionEvent::HoverReached);
            true
        } else {
            core.event(EventLevel::Error, format!("launch failed: {}", r.detail));
            false
        }
    }

    /// Runs one idle tick and handles any client messages that arrived; a
    /// command runs its whole mission before this returns. False once the
    /// onboard link is gone.
    pub fn serve_tick(&mut self) -> bool {
        if self.core.next_tick().is_none() {
            return false;
        }
        while let Some(m) = self.core.pending.pop_front() {
            self.handle_idle(m);
        }
        true
    }

    fn handle_idle(&mut self, msg: WireMessage) {
        let state = self.core.state;
        match msg {
            WireMessage::Command { text } => {
                let s = self.run_command(&text);
                self.summaries.push(s);
            }
            WireMessage::Click { u, v } if state == MissionState::StandbyHover => {
                self.core.direct(Directive::Track { select: TrackSelector::Click { u, v } });
                self.core.event(EventLevel::Info, format!("tracking object at ({u:.0}, {v:.0})"));
            }
            WireMessage::Gesture { dir } if state == MissionState::StandbyHover => {
                let step = self.core.cfg.gesture_step;
                self.core.direct(Directive::Gesture { dir, step });
            }
            WireMessage::Abort {} if state == MissionState::MissionFailed => self.core.fire(MissionEvent::Acknowledge),
            WireMessage::Abort {} if state == MissionState::StandbyHover => self.core.direct(Directive::Hold),
            other => {
                let text = format!("{} ignored while {}", other.type_name(), state.name());
                self.core.event(EventLevel::Warn, text);
            }
        }
    }

    /// Plans and executes `instruction` from standby, then returns to the
    /// user (or, on failure, waits for acknowledgment).
    pub fn run_command(&mut self, instruction: &str) -> MissionSummary {
        let core = &mut self.core;
        let start_tick = core.tick();
        let odometer = core.odometer;
        core.abort_requested = false;
        core.routes.clear();
        core.answers.clear();
        if core.state != MissionState::StandbyHover {
            let text = format!("cannot accept a command while {}", core.state.name());
            core.event(EventLevel::Error, text);
            return MissionSummary {
                instruction: instruction.into(),
                result: MissionResult::Rejected,
                attempts: 0,
                start_tick,
                end_tick: start_tick,
                path_length: 0.0,
                routes: vec![],
                answers: vec![],
                final_state: core.state,
            };
        }
        let planner = Arc::clone(&core.backends.planner);
        let budgets = core.cfg.budgets;
        let max_attempts = core.cfg.max_attempts;
        let outcome = run_mission(instruction, &*planner, core, &self.kb, &self.registry, &budgets, max_attempts);
        let succeeded = matches!(outcome, MissionOutcome::Succeeded { .. });
        if let Err(e) = self.kb.record_outcome(instruction, outcome.plan(), outcome.logs(), succeeded, core.tick()) {
            core.event(EventLevel::Warn, format!("knowledge journal: {e}"));
        }
        let result = match &outcome {
            MissionOutcome::Succeeded { .. } => MissionResult::Succeeded,
            MissionOutcome::Aborted { .. } => MissionResult::Aborted,
            MissionOutcome::Failed { .. } => MissionResult::Failed,
        };
        if result == MissionResult::Failed {
            let text = format!("mission failed after {} attempts", outcome.logs().len());
            core.event(EventLevel::Error, text);
            core.direct(Directive::Hold);
            if core.cfg.auto_acknowledge {
                core.fire(MissionEvent::Acknowledge);
            }
        } else {
            core.return_home();
            core.fire(MissionEvent::ReturnComplete);
        }
        core.plan = None;
        // Let clients see the settled state.
        core.next_tick();
        MissionSummary {
            instruction: instruction.into(),
            result,
            attempts: outcome.logs().len(),
            start_tick,
            end_tick: core.tick(),
            path_length: core.odometer - odometer,
            routes: std::mem::take(&mut core.routes),
            answers: std::mem::take(&mut core.answers),
            final_state: core.state,
        }
    }
}
