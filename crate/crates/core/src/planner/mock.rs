use std::collections::BTreeMap;

use serde_json::{json, Value};

use super::{
    normalize_instruction, plan_id, step_budget, Budgets, FailureCause, PlanDocument, PlannerBackend, PlannerError,
    PromptContext, StepDocument,
};
use crate::geonav::lookup_landmark;
use crate::text::tokenize;
use crate::world::LandmarkNode;

const QUESTION_WORDS: [&str; 11] = ["what", "which", "who", "where", "how", "is", "are", "can", "tell", "when", "why"];
const RELATIONS: [&str; 3] = ["ahead of ", "behind ", "above "];

/// Deterministic rule-based planner and replanner.
#[derive(Debug, Clone)]
pub struct MockPlanner {
    pub landmarks: Vec<LandmarkNode>,
    pub budgets: Budgets,
}

fn step(tool: &str, params: Value) -> StepDocument {
    let params: BTreeMap<String, Value> = serde_json::from_value(params).expect("object params");
    StepDocument { tool: tool.into(), params }
}

/// Lowercases, drops a leading greeting ("hi airstar,") or "please", and
/// trailing punctuation. Returns the body and whether it ended with '?'.
fn strip(instruction: &str) -> (String, bool) {
    let mut s = normalize_instruction(instruction);
    let question = s.trim_end().ends_with('?');
    for greeting in ["hi", "hey", "hello"] {
        if let Some(rest) = s.strip_prefix(greeting) {
            if rest.is_empty() || rest.starts_with([' ', ',']) {
                s = rest.trim_start_matches([' ', ',']).to_string();
                if let Some(rest) = s.strip_prefix("airstar") {
                    s = rest.trim_start_matches([' ', ',']).to_string();
                }
                break;
            }
        }
    }
    if let Some(rest) = s.strip_prefix("please ") {
        s = rest.to_string();
    }
    let s = s.trim().trim_end_matches(['.', '!', '?', ',']).trim().to_string();
    (s, question)
}

fn strip_article(x: &str) -> &str {
    x.trim().strip_prefix("the ").unwrap_or(x.trim())
}

/// Whether `needle` occurs in `haystack` as a whole-token subsequence.
fn contains_phrase(haystack: &[String], needle: &str) -> bool {
    let n = tokenize(needle);
    !n.is_empty() && haystack.windows(n.len()).any(|w| w == n.as_slice())
}

impl MockPlanner {
    pub fn new(landmarks: Vec<LandmarkNode>, budgets: Budgets) -> Self {
        Self { landmarks, budgets }
    }

    fn resolve(&self, x: &str, instruction: &str) -> Result<String, PlannerError> {
        lookup_landmark(&self.landmarks, strip_article(x))
            .map(|lm| lm.name.clone())
            .map_err(|_| PlannerError::NoMatch(instruction.to_string()))
    }

    /// Landmark whose name or alias appears verbatim in the question; ties go
    /// to the smallest id.
    fn named_in(&self, tokens: &[String]) -> Option<&LandmarkNode> {
        let mut hits: Vec<&LandmarkNode> = self
            .landmarks
            .iter()
            .filter(|lm| contains_phrase(tokens, &lm.name) || lm.aliases.iter().any(|a| contains_phrase(tokens, a)))
            .collect();
        hits.sort_by(|a, b| a.id.cmp(&b.id));
        hits.first().copied()
    }

    /// First-attempt grammar.
    pub fn parse(&self, instruction: &str) -> Result<Vec<StepDocument>, PlannerError> {
        let (body, question) = strip(instruction);
        let no_match = || PlannerError::NoMatch(instruction.to_string());
        if let Some(x) = body.strip_prefix("guide me to ") {
            let name = self.resolve(x, instruction)?;
            return Ok(vec![
                step("geo_navigate", json!({"landmark": name, "map": "pedestrian_guide"})),
                step("announce_arrival", json!({})),
                step("return_to_user", json!({})),
            ]);
        }
        if let Some(x) = body.strip_prefix("go to ") {
            let name = self.resolve(x, instruction)?;
            return Ok(vec![step("geo_navigate", json!({"landmark": name, "map": "uav_autonomous"}))]);
        }
        if let Some(rest) = body.strip_prefix("fly ") {
            if RELATIONS.iter().any(|r| rest.starts_with(r)) {
                return Ok(vec![step("object_navigate", json!({"instruction": body}))]);
            }
        }
        for verb in ["follow ", "track "] {
            if let Some(x) = body.strip_prefix(verb) {
                if x.trim().is_empty() {
                    return Err(no_match());
                }
                return Ok(vec![step("track", json!({"query": x.trim()}))]);
            }
        }
        if body.contains("take my picture") || body.contains("take a picture of me") || body.contains("gesture") {
            return Ok(vec![step("frame_human", json!({})), step("gesture_session", json!({}))]);
        }
        let tokens = tokenize(&body);
        let is_question = question || tokens.first().is_some_and(|t| QUESTION_WORDS.contains(&t.as_str()));
        if is_question {
            let name = match body.split_once(" near ") {
                Some((_, x)) => self.resolve(x, instruction)?,
                None => self.named_in(&tokens).map(|lm| lm.name.clone()).ok_or_else(no_match)?,
            };
            return Ok(vec![
                step("geo_navigate", json!({"landmark": name, "map": "uav_autonomous"})),
                step("search_qa", json!({"question": instruction.trim()})),
            ]);
        }
        Err(no_match())
    }

    /// Repairs the remainder of `previous` starting at the failed step.
    fn repair(&self, ctx: &PromptContext, previous: &PlanDocument) -> Result<Vec<StepDocument>, PlannerError> {
        let log = ctx.prior_logs.last().expect("replanning has a log");
        let Some(failed) = log.failed_step() else {
            return self.parse(&ctx.instruction);
        };
        let mut steps: Vec<StepDocument> = previous.steps[failed.index..].to_vec();
        match failed.failure_cause {
            Some(FailureCause::NoPath) => {
                fn effective(s: &StepDocument) -> Option<&str> {
                    let default = match s.tool.as_str() {
                        "geo_navigate" => "uav_autonomous",
                        "return_to_user" => "pedestrian_guide",
                        _ => return None,
                    };
                    Some(s.params.get("map").and_then(Value::as_str).unwrap_or(default))
                }
                if let Some(failed_map) = effective(&steps[0]).map(str::to_string) {
                    let flipped = if failed_map == "uav_autonomous" { "pedestrian_guide" } else { "uav_autonomous" };
                    for s in &mut steps {
                        if effective(s) == Some(failed_map.as_str()) {
                            s.params.insert("map".into(), json!(flipped));
                        }
                    }
                }
            }
            Some(FailureCause::Timeout) => {
                let s = &mut steps[0];
                if !s.params.contains_key("budget") && s.tool != "track" {
                    let call = super::SkillCall { tool: s.tool.clone(), params: s.params.clone(), status: super::StepStatus::Pending };
                    s.params.insert("budget".into(), json!(2 * step_budget(&call, &self.budgets)));
                }
            }
            Some(FailureCause::NoTarget) if steps[0].tool == "object_navigate" => {
                let text = steps[0].params.get("instruction").and_then(Value::as_str).unwrap_or(&ctx.instruction);
                if let Ok(lm) = lookup_landmark(&self.landmarks, text).or_else(|_| lookup_landmark(&self.landmarks, &ctx.instruction)) {
                    steps.insert(0, step("geo_navigate", json!({"landmark": lm.name, "map": "uav_autonomous"})));
                }
            }
            _ => {}
        }
        Ok(steps)
    }
}

impl PlannerBackend for MockPlanner {
    fn plan(&self, ctx: &PromptContext) -> Result<PlanDocument, PlannerError> {
        let steps = match (&ctx.previous_plan, ctx.prior_logs.is_empty()) {
            (Some(prev), false) => self.repair(ctx, prev)?,
            _ => self.parse(&ctx.instruction)?,
        };
        Ok(PlanDocument { plan_id: plan_id(&ctx.instruction), attempt: ctx.attempt, steps })
    }
}
