//! Task planner: tool registry, plan documents and validation, prompt
//! assembly, the mock grammar backend, step execution and replanning.

mod exec;
mod mock;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use exec::{execute_plan, run_mission, step_budget, Budgets, MissionHost, MissionOutcome, SkillExecutor, StepResult};
pub use mock::MockPlanner;

use crate::knowledge::{KnowledgeStore, ScoredEntry, DEFAULT_K};

/// Shipped prompt template for remote language-model backends.
pub const PROMPT_TEMPLATE: &str = include_str!("../../assets/planner_prompt.txt");

pub const DIRECTIONS: [&str; 6] = ["up", "down", "left", "right", "forward", "backward"];
pub const MAPS: [&str; 2] = ["uav_autonomous", "pedestrian_guide"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamType {
    String,
    Number,
    Landmark,
    Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolParam {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ParamType,
    pub required: bool,
    pub description: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub allowed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    pub description: String,
    pub params: Vec<ToolParam>,
    pub success_criterion: String,
}

fn param(name: &str, ty: ParamType, required: bool, description: &str) -> ToolParam {
    ToolParam { name: name.into(), ty, required, description: description.into(), allowed: vec![] }
}

fn map_param(description: &str) -> ToolParam {
    ToolParam { allowed: MAPS.iter().map(|s| s.to_string()).collect(), ..param("map", ParamType::String, false, description) }
}

fn budget_param() -> ToolParam {
    param("budget", ParamType::Number, false, "tick budget override for this step")
}

fn tool(name: &str, description: &str, params: Vec<ToolParam>, success: &str) -> ToolSchema {
    ToolSchema { name: name.into(), description: description.into(), params, success_criterion: success.into() }
}

/// The skill library exposed to planning backends.
pub fn registry() -> Vec<ToolSchema> {
    vec![
        tool(
            "geo_navigate",
            "Fly to a named landmark along a smoothed route planned on the chosen occupancy map.",
            vec![
                param("landmark", ParamType::Landmark, true, "landmark name or alias"),
                map_param("uav_autonomous (default) or pedestrian_guide"),
                budget_param(),
            ],
            "UAV within 1.5 m of the landmark goal",
        ),
        tool(
            "announce_arrival",
            "Tell the user that the destination has been reached.",
            vec![],
            "announcement sent",
        ),
        tool(
            "return_to_user",
            "Fly back to a point near the user.",
            vec![map_param("pedestrian_guide (default) or uav_autonomous"), budget_param()],
            "UAV within 1.5 m of the return point",
        ),
        tool(
            "object_navigate",
            "Fly to an object seen in the camera view, described in words.",
            vec![param("instruction", ParamType::String, true, "object description with spatial relation"), budget_param()],
            "UAV within 1.0 m of the object goal",
        ),
        tool(
            "track",
            "Keep a person or object centered in view while following it.",
            vec![
                param("query", ParamType::String, true, "what to track"),
                param("duration", ParamType::Number, false, "seconds to track (default 20)"),
            ],
            "tracked for the requested duration without losing the target",
        ),
        tool(
            "frame_human",
            "Turn toward the nearest person and move to portrait framing range.",
            vec![],
            "person centered within 5 px at 3-8 m",
        ),
        tool(
            "gesture_session",
            "Accept up/down/left/right/forward/backward refinements from the user.",
            vec![],
            "session ended by the user or idle timeout",
        ),
        tool(
            "gesture",
            "Apply one body-frame position nudge.",
            vec![
                ToolParam {
                    allowed: DIRECTIONS.iter().map(|s| s.to_string()).collect(),
                    ..param("dir", ParamType::Direction, true, "nudge direction")
                },
                param("step", ParamType::Number, false, "meters in (0, 2], default 0.5"),
            ],
            "setpoint applied",
        ),
        tool(
            "search_qa",
            "Scan views around the nearest landmark and answer a question about it.",
            vec![param("question", ParamType::String, true, "the user's question"), budget_param()],
            "answer produced",
        ),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDocument {
    pub tool: String,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
}

/// Wire shape every planning backend must produce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub plan_id: String,
    pub attempt: u32,
    pub steps: Vec<StepDocument>,
}

impl PlanDocument {
    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan document serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Pending,
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillCall {
    pub tool: String,
    pub params: BTreeMap<String, Value>,
    pub status: StepStatus,
}

impl SkillCall {
    pub fn str_param(&self, name: &str) -> Option<&str> {
        self.params.get(name).and_then(Value::as_str)
    }

    pub fn num_param(&self, name: &str) -> Option<f64> {
        self.params.get(name).and_then(Value::as_f64)
    }
}

/// A plan that passed registry validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub plan_id: String,
    pub attempt: u32,
    pub steps: Vec<SkillCall>,
}

impl Plan {
    pub fn document(&self) -> PlanDocument {
        PlanDocument {
            plan_id: self.plan_id.clone(),
            attempt: self.attempt,
            steps: self.steps.iter().map(|s| StepDocument { tool: s.tool.clone(), params: s.params.clone() }).collect(),
        }
    }

    pub fn succeeded(&self) -> bool {
        self.steps.iter().all(|s| s.status == StepStatus::Succeeded)
    }

    /// One-line `tool(k=v, …) → tool(…)` rendering.
    pub fn summary(&self) -> String {
        self.steps
            .iter()
            .map(|s| {
                let args: Vec<String> = s
                    .params
                    .iter()
                    .map(|(k, v)| match v {
                        Value::String(t) => format!("{k}={t}"),
                        other => format!("{k}={other}"),
                    })
                    .collect();
                format!("{}({})", s.tool, args.join(", "))
            })
            .collect::<Vec<_>>()
            .join(" -> ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum PlannerError {
    #[error("plan rejected: {0}")]
    PlanRejected(String),
    #[error("no planning rule matches {0:?}")]
    NoMatch(String),
    #[error("planner backend unavailable: {0}")]
    BackendUnavailable(String),
}

fn type_ok(ty: ParamType, allowed: &[String], v: &Value) -> bool {
    let in_allowed = |s: &str| allowed.is_empty() || allowed.iter().any(|a| a == s);
    match ty {
        ParamType::String | ParamType::Landmark => v.as_str().is_some_and(|s| !s.trim().is_empty() && in_allowed(s)),
        ParamType::Number => v.as_f64().is_some_and(f64::is_finite),
        ParamType::Direction => v.as_str().is_some_and(|s| DIRECTIONS.contains(&s) && in_allowed(s)),
    }
}

/// Checks tool names, required params, param types and unknown params.
pub fn validate(doc: &PlanDocument, registry: &[ToolSchema]) -> Result<Plan, PlannerError> {
    let reject = |msg: String| Err(PlannerError::PlanRejected(msg));
    if doc.steps.is_empty() {
        return reject("plan has no steps".into());
    }
    let mut steps = Vec::with_capacity(doc.steps.len());
    for (i, step) in doc.steps.iter().enumerate() {
        let Some(schema) = registry.iter().find(|t| t.name == step.tool) else {
            return reject(format!("step {i}: unknown tool {:?}", step.tool));
        };
        for p in &schema.params {
            match step.params.get(&p.name) {
                None if p.required => return reject(format!("step {i}: {} missing required {:?}", schema.name, p.name)),
                Some(v) if !type_ok(p.ty, &p.allowed, v) => {
                    return reject(format!("step {i}: {}.{} has invalid value {v}", schema.name, p.name))
                }
                _ => {}
            }
        }
        if let Some(extra) = step.params.keys().find(|k| !schema.params.iter().any(|p| &p.name == *k)) {
            return reject(format!("step {i}: {} has unknown param {extra:?}", schema.name));
        }
        steps.push(SkillCall { tool: step.tool.clone(), params: step.params.clone(), status: StepStatus::Pending });
    }
    Ok(Plan { plan_id: doc.plan_id.clone(), attempt: doc.attempt, steps })
}

/// Lowercased, whitespace-collapsed instruction used for ids and matching.
pub fn normalize_instruction(instruction: &str) -> String {
    instruction.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// `plan-` followed by the first 12 hex digits of SHA-256 of the normalized
/// instruction.
pub fn plan_id(instruction: &str) -> String {
    let digest = Sha256::digest(normalize_instruction(instruction).as_bytes());
    let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    format!("plan-{hex}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCause {
    Timeout,
    NoPath,
    NoTarget,
    TargetLost,
    BackendUnavailable,
    Blocked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Succeeded,
    Failed,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: usize,
    pub tool: String,
    pub started_tick: u64,
    pub ended_tick: u64,
    pub outcome: Outcome,
    pub failure_cause: Option<FailureCause>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

/// What happened during one planning attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionLog {
    pub plan_id: String,
    pub attempt: u32,
    pub records: Vec<StepRecord>,
    /// Set when the attempt failed before execution (no plan accepted).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planning_failure: Option<PlannerError>,
}

impl ExecutionLog {
    pub fn failed_step(&self) -> Option<&StepRecord> {
        self.records.last().filter(|r| r.outcome != Outcome::Succeeded)
    }

    pub fn succeeded(&self) -> bool {
        self.planning_failure.is_none() && self.failed_step().is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptContext {
    pub instruction: String,
    pub attempt: u32,
    pub knowledge: Vec<ScoredEntry>,
    pub tools: Vec<ToolSchema>,
    pub perception: String,
    /// Only populated for replanning attempts.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prior_logs: Vec<ExecutionLog>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub previous_plan: Option<PlanDocument>,
}

impl PromptContext {
    /// Fills the prompt template's `{instruction}`, `{knowledge}`, `{tools}`,
    /// `{perception}` and `{history}` slots.
    pub fn render(&self, template: &str) -> String {
        let knowledge = self
            .knowledge
            .iter()
            .map(|s| format!("- [{}] {}", s.entry.id, s.entry.text))
            .collect::<Vec<_>>()
            .join("\n");
        let tools = serde_json::to_string_pretty(&self.tools).expect("tools serialize");
        let history = if self.prior_logs.is_empty() {
            String::new()
        } else {
            let mut h = String::from("Previous attempts:\n");
            if let Some(p) = &self.previous_plan {
                h.push_str(&format!("plan: {}\n", serde_json::to_string(p).expect("plan serializes")));
            }
            for log in &self.prior_logs {
                h.push_str(&serde_json::to_string(log).expect("log serializes"));
                h.push('\n');
            }
            h
        };
        template
            .replace("{instruction}", &self.instruction)
            .replace("{knowledge}", &knowledge)
            .replace("{tools}", &tools)
            .replace("{perception}", &self.perception)
            .replace("{history}", &history)
    }
}

/// Builds the planning context: top-k knowledge for instruction + perception,
/// the tool registry and, for replanning attempts only, the prior logs.
pub fn assemble_context(
    instruction: &str,
    perception: &str,
    kb: &KnowledgeStore,
    registry: &[ToolSchema],
    prior_logs: &[ExecutionLog],
    previous_plan: Option<&PlanDocument>,
) -> PromptContext {
    let attempt = prior_logs.len() as u32;
    PromptContext {
        instruction: instruction.to_string(),
        attempt,
        knowledge: kb.retrieve(instruction, perception, DEFAULT_K),
        tools: registry.to_vec(),
        perception: perception.to_string(),
        prior_logs: prior_logs.to_vec(),
        previous_plan: if attempt > 0 { previous_plan.cloned() } else { None },
    }
}

/// Anything that turns a context into a plan document.
pub trait PlannerBackend {
    fn plan(&self, ctx: &PromptContext) -> Result<PlanDocument, PlannerError>;
}

/// Runs the backend and validates its output against the registry.
pub fn make_plan(ctx: &PromptContext, backend: &dyn PlannerBackend) -> Result<Plan, PlannerError> {
    let doc = backend.plan(ctx)?;
    validate(&doc, &ctx.tools)
}
