//! HTTP clients for the external-model slots. Each posts JSON and expects
//! JSON back; transport errors and timeouts surface as backend-unavailable
//! errors so the planner can replan.

use std::sync::Arc;
use std::time::Duration;

use airstar_core::camera::CameraModel;
use airstar_core::config::Config;
use airstar_core::objectnav::{
    Annotation, GroundingBackend, GroundingRequest, GroundingResponse, ObjectNavError, PixelSource, PixelTarget,
};
use airstar_core::planner::{PlanDocument, PlannerBackend, PlannerError, PromptContext, PROMPT_TEMPLATE};
use airstar_core::skills::{QaBackend, SkillError, ViewScorer};
use airstar_core::station::Backends;
use airstar_core::world::{Scene, ViewFrame, VisibleObject};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
pub struct Remote {
    url: String,
    client: reqwest::blocking::Client,
}

impl Remote {
    pub fn new(url: impl Into<String>, timeout: Duration) -> anyhow::Result<Self> {
        let client = reqwest::blocking::Client::builder().timeout(timeout).build()?;
        Ok(Self { url: url.into(), client })
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, body: &Req) -> Result<Resp, String> {
        let resp = self.client.post(&self.url).json(body).send().map_err(|e| format!("{}: {e}", self.url))?;
        let resp = resp.error_for_status().map_err(|e| format!("{}: {e}", self.url))?;
        resp.json().map_err(|e| format!("{}: bad response: {e}", self.url))
    }
}

#[derive(Serialize)]
struct PlanRequest<'a> {
    prompt: String,
    context: &'a PromptContext,
}

impl PlannerBackend for Remote {
    fn plan(&self, ctx: &PromptContext) -> Result<PlanDocument, PlannerError> {
        let req = PlanRequest { prompt: ctx.render(PROMPT_TEMPLATE), context: ctx };
        self.post(&req).map_err(PlannerError::BackendUnavailable)
    }
}

fn annotations(objects: &[VisibleObject]) -> Vec<Annotation> {
    objects.iter().map(Annotation::from).collect()
}

impl GroundingBackend for Remote {
    fn ground(&self, instruction: &str, frame: &ViewFrame) -> Result<Option<PixelTarget>, ObjectNavError> {
        let req = GroundingRequest { instruction: instruction.into(), objects: annotations(&frame.objects) };
        match self.post(&req).map_err(ObjectNavError::BackendUnavailable)? {
            GroundingResponse::Point { u, v, confidence } => {
                Ok(Some(PixelTarget { u, v, confidence, source: PixelSource::GroundingBackend }))
            }
            GroundingResponse::None { .. } => Ok(None),
        }
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    nouns: &'a [String],
    objects: Vec<Annotation>,
    camera: &'a CameraModel,
}

#[derive(Deserialize)]
struct ScoreResponse {
    score: f64,
}

impl ViewScorer for Remote {
    fn score(&self, nouns: &[String], objects: &[VisibleObject], camera: &CameraModel) -> Result<f64, SkillError> {
        let req = ScoreRequest { nouns, objects: annotations(objects), camera };
        let r: ScoreResponse = self.post(&req).map_err(SkillError::BackendUnavailable)?;
        Ok(r.score)
    }
}

#[derive(Serialize)]
struct QaRequest<'a> {
    question: &'a str,
    objects: Vec<Annotation>,
}

#[derive(Deserialize)]
struct QaResponse {
    answer: String,
}

impl QaBackend for Remote {
    fn answer(&self, question: &str, objects: &[VisibleObject]) -> Result<String, SkillError> {
        let req = QaRequest { question, objects: annotations(objects) };
        let r: QaResponse = self.post(&req).map_err(SkillError::BackendUnavailable)?;
        Ok(r.answer)
    }
}

/// Mock backends, with each slot that has a configured URL replaced by its
/// remote client.
pub fn backends(scene: &Scene, cfg: &Config) -> anyhow::Result<Backends> {
    let mut b = Backends::mock(scene, cfg);
    let timeout = Duration::from_secs_f64(cfg.backends.timeout_s);
    let remote = |url: &String| Remote::new(url.clone(), timeout).map(Arc::new);
    if let Some(u) = &cfg.backends.planner {
        b.planner = remote(u)?;
    }
    if let Some(u) = &cfg.backends.grounding {
        b.grounding = remote(u)?;
    }
    if let Some(u) = &cfg.backends.scorer {
        b.scorer = remote(u)?;
    }
    if let Some(u) = &cfg.backends.qa {
        b.qa = remote(u)?;
    }
    Ok(b)
}
