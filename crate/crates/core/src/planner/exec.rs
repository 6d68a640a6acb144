use serde::{Deserialize, Serialize};

use super::{
    assemble_context, make_plan, plan_id, ExecutionLog, FailureCause, Outcome, Plan, PlanDocument, PlannerBackend,
    PlannerError, SkillCall, StepRecord, StepStatus, ToolSchema,
};
use crate::knowledge::KnowledgeStore;
use crate::mission::MissionEvent;

/// Default per-step tick budgets (10 ticks per second).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budgets {
    pub geo_navigate: u64,
    pub object_navigate: u64,
    pub search_qa: u64,
    pub return_to_user: u64,
    pub frame_human: u64,
    pub gesture_session: u64,
    pub gesture: u64,
    pub announce_arrival: u64,
    /// Extra ticks granted to a track step beyond its requested duration.
    pub track_slack: u64,
    pub track_default_duration_s: f64,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            geo_navigate: 1200,
            object_navigate: 600,
            search_qa: 300,
            return_to_user: 1200,
            frame_human: 300,
            gesture_session: 600,
            gesture: 50,
            announce_arrival: 10,
            track_slack: 20,
            track_default_duration_s: 20.0,
        }
    }
}

/// Tick budget for a step: the step's own `budget` param if present,
/// otherwise the configured default for its tool.
pub fn step_budget(call: &SkillCall, budgets: &Budgets) -> u64 {
    if let Some(b) = call.num_param("budget") {
        return b.max(1.0).round() as u64;
    }
    match call.tool.as_str() {
        "geo_navigate" => budgets.geo_navigate,
        "object_navigate" => budgets.object_navigate,
        "search_qa" => budgets.search_qa,
        "return_to_user" => budgets.return_to_user,
        "frame_human" => budgets.frame_human,
        "gesture_session" => budgets.gesture_session,
        "gesture" => budgets.gesture,
        "announce_arrival" => budgets.announce_arrival,
        "track" => {
            let duration = call.num_param("duration").unwrap_or(budgets.track_default_duration_s);
            (duration * 10.0).ceil().max(1.0) as u64 + budgets.track_slack
        }
        _ => budgets.geo_navigate,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub outcome: Outcome,
    pub cause: Option<FailureCause>,
    pub started_tick: u64,
    pub ended_tick: u64,
    pub detail: String,
}

impl StepResult {
    pub fn succeeded(started_tick: u64, ended_tick: u64) -> Self {
        Self { outcome: Outcome::Succeeded, cause: None, started_tick, ended_tick, detail: String::new() }
    }

    pub fn failed(cause: FailureCause, started_tick: u64, ended_tick: u64, detail: impl Into<String>) -> Self {
        Self { outcome: Outcome::Failed, cause: Some(cause), started_tick, ended_tick, detail: detail.into() }
    }

    pub fn aborted(started_tick: u64, ended_tick: u64) -> Self {
        Self { outcome: Outcome::Aborted, cause: None, started_tick, ended_tick, detail: String::new() }
    }
}

/// Runs one skill to completion (success, failure or abort) within a tick
/// budget.
pub trait SkillExecutor {
    fn run_step(&mut self, index: usize, call: &SkillCall, budget: u64) -> StepResult;

    fn on_step(&mut self, _index: usize, _status: StepStatus, _cause: Option<FailureCause>) {}
}

/// Runs steps in order, halting at the first step that does not succeed.
pub fn execute_plan(plan: &mut Plan, exec: &mut impl SkillExecutor, budgets: &Budgets) -> ExecutionLog {
    let mut records = vec![];
    for index in 0..plan.steps.len() {
        plan.steps[index].status = StepStatus::Running;
        exec.on_step(index, StepStatus::Running, None);
        let call = plan.steps[index].clone();
        let r = exec.run_step(index, &call, step_budget(&call, budgets));
        let status = if r.outcome == Outcome::Succeeded { StepStatus::Succeeded } else { StepStatus::Failed };
        plan.steps[index].status = status;
        exec.on_step(index, status, r.cause);
        records.push(StepRecord {
            index,
            tool: call.tool.clone(),
            started_tick: r.started_tick,
            ended_tick: r.ended_tick,
            outcome: r.outcome,
            failure_cause: r.cause,
            detail: r.detail,
        });
        if status == StepStatus::Failed {
            break;
        }
    }
    ExecutionLog { plan_id: plan.plan_id.clone(), attempt: plan.attempt, records, planning_failure: None }
}

/// Station-side environment a mission runs in.
pub trait MissionHost: SkillExecutor {
    /// Text summary of the current view for knowledge retrieval.
    fn perception(&mut self) -> String;
    fn on_event(&mut self, event: MissionEvent);
    fn on_plan(&mut self, plan: &Plan);
    fn on_planning_error(&mut self, _err: &PlannerError) {}
}

#[derive(Debug, Clone, PartialEq)]
pub enum MissionOutcome {
    Succeeded { plan: Plan, logs: Vec<ExecutionLog> },
    Aborted { plan: Plan, logs: Vec<ExecutionLog> },
    /// Attempts exhausted; carries one log per attempt.
    Failed { plan: Option<Plan>, logs: Vec<ExecutionLog> },
}

impl MissionOutcome {
    pub fn logs(&self) -> &[ExecutionLog] {
        match self {
            MissionOutcome::Succeeded { logs, .. }
            | MissionOutcome::Aborted { logs, .. }
            | MissionOutcome::Failed { logs, .. } => logs,
        }
    }

    pub fn plan(&self) -> Option<&Plan> {
        match self {
            MissionOutcome::Succeeded { plan, .. } | MissionOutcome::Aborted { plan, .. } => Some(plan),
            MissionOutcome::Failed { plan, .. } => plan.as_ref(),
        }
    }
}

/// Plan, execute and replan until success, abort, or `max_attempts`
/// attempts (planning failures included) have failed.
pub fn run_mission(
    instruction: &str,
    backend: &dyn PlannerBackend,
    host: &mut impl MissionHost,
    kb: &KnowledgeStore,
    registry: &[ToolSchema],
    budgets: &Budgets,
    max_attempts: u32,
) -> MissionOutcome {
    host.on_event(MissionEvent::Command);
    let mut logs: Vec<ExecutionLog> = vec![];
    let mut previous: Option<PlanDocument> = None;
    let mut last_plan = None;
    for attempt in 0..max_attempts {
        let perception = host.perception();
        let ctx = assemble_context(instruction, &perception, kb, registry, &logs, previous.as_ref());
        let mut plan = match make_plan(&ctx, backend) {
            Ok(p) => p,
            Err(e) => {
                host.on_planning_error(&e);
                logs.push(ExecutionLog {
                    plan_id: plan_id(instruction),
                    attempt,
                    records: vec![],
                    planning_failure: Some(e),
                });
                host.on_event(MissionEvent::PlanningFailed);
                continue;
            }
        };
        plan.attempt = attempt;
        host.on_plan(&plan);
        host.on_event(MissionEvent::PlanAccepted);
        let log = execute_plan(&mut plan, host, budgets);
        previous = Some(plan.document());
        let aborted = log.records.last().is_some_and(|r| r.outcome == Outcome::Aborted);
        let ok = log.succeeded();
        logs.push(log);
        if ok {
            host.on_event(MissionEvent::PlanSucceeded);
            return MissionOutcome::Succeeded { plan, logs };
        }
        if aborted {
            host.on_event(MissionEvent::Abort);
            return MissionOutcome::Aborted { plan, logs };
        }
        host.on_event(MissionEvent::StepFailed);
        last_plan = Some(plan);
    }
    host.on_event(MissionEvent::AttemptsExhausted);
    MissionOutcome::Failed { plan: last_plan, logs }
}
