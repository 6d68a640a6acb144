use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::SkillError;
use crate::camera::CameraModel;
use crate::geonav::gps_to_local;
use crate::text::{content_tokens, overlap};
use crate::world::{render_objects, wrap_angle, GeoPoint, LandmarkNode, UavState, VisibleObject, World};

/// Yaw offsets (multiples of the scan step) visited around the center yaw.
pub const SCAN_OFFSETS: [i32; 7] = [-3, -2, -1, 0, 1, 2, 3];
const SCAN_STEP: f64 = std::f64::consts::PI / 18.0;
const MIN_HORIZONTAL_DISTANCE: f64 = 0.1;
pub const NO_LANDMARK_ANSWER: &str = "no relevant landmark visible";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewCandidate {
    /// Camera heading of this view (world frame).
    pub yaw: f64,
    pub k: i32,
    pub score: f64,
    pub visible_tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub best: ViewCandidate,
    /// Body yaw that points the camera along `best.yaw`.
    pub body_yaw: f64,
    pub objects: Vec<VisibleObject>,
    pub candidates: Vec<ViewCandidate>,
}

/// Scores one rendered view against the landmark nouns.
pub trait ViewScorer {
    fn score(&self, nouns: &[String], objects: &[VisibleObject], camera: &CameraModel) -> Result<f64, SkillError>;
}

/// Sum over visible objects of tag overlap, down-weighted by the object's
/// horizontal angular offset from the view center.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockScorer;

impl ViewScorer for MockScorer {
    fn score(&self, nouns: &[String], objects: &[VisibleObject], camera: &CameraModel) -> Result<f64, SkillError> {
        let q: BTreeSet<String> = nouns.iter().cloned().collect();
        Ok(objects
            .iter()
            .map(|o| {
                let n = overlap(&q, o.tags()) as f64;
                let offset = ((o.bbox_center().0 - camera.cx) / camera.fx).atan().abs();
                n / (1.0 + offset)
            })
            .sum())
    }
}

/// Content tokens of a question or instruction, used as the scoring nouns.
pub fn landmark_nouns(text: &str) -> Vec<String> {
    content_tokens(text).into_iter().collect()
}

/// Heading from the UAV to the landmark's local position, in (−π, π].
pub fn candidate_yaw(landmark: &LandmarkNode, uav: &UavState, reference: &GeoPoint) -> Result<f64, SkillError> {
    let p = gps_to_local(reference, &landmark.gps).map_err(|_| SkillError::DegenerateGeometry)?;
    let (dx, dy) = (p.x - uav.position.x, p.y - uav.position.y);
    if dx.hypot(dy) < MIN_HORIZONTAL_DISTANCE {
        return Err(SkillError::DegenerateGeometry);
    }
    Ok(wrap_angle(dy.atan2(dx)))
}

fn camera_heading_offset(camera: &CameraModel) -> f64 {
    let f = camera.horizontal_forward_body();
    f.y.atan2(f.x)
}

/// Renders and scores the seven views around `center_yaw` (a camera
/// heading) and returns the best one. Ties go to the smaller |k|, then the
/// smaller k.
pub fn scan_views(
    world: &World,
    uav: &UavState,
    camera: &CameraModel,
    center_yaw: f64,
    nouns: &[String],
    scorer: &dyn ViewScorer,
) -> Result<ScanResult, SkillError> {
    scan_with(camera, center_yaw, nouns, scorer, |body_yaw| {
        let pose = UavState { yaw: body_yaw, ..*uav };
        Ok(render_objects(world, &pose, camera))
    })
}

/// [`scan_views`] with the view source abstracted: `view(body_yaw)` returns
/// the objects seen with the body turned to `body_yaw`. Views are requested
/// in order k = −3..=3.
pub fn scan_with<F>(
    camera: &CameraModel,
    center_yaw: f64,
    nouns: &[String],
    scorer: &dyn ViewScorer,
    mut view: F,
) -> Result<ScanResult, SkillError>
where
    F: FnMut(f64) -> Result<Vec<VisibleObject>, SkillError>,
{
    let mut best: Option<(ViewCandidate, f64, Vec<VisibleObject>)> = None;
    let mut candidates = Vec::with_capacity(SCAN_OFFSETS.len());
    for k in SCAN_OFFSETS {
        let yaw = wrap_angle(center_yaw + k as f64 * SCAN_STEP);
        let body_yaw = body_yaw_for(camera, yaw);
        let objects = view(body_yaw)?;
        let score = if nouns.is_empty() { 0.0 } else { scorer.score(nouns, &objects, camera)? };
        let visible_tags: BTreeSet<String> = objects.iter().flat_map(|o| o.tags().map(str::to_string)).collect();
        let cand = ViewCandidate { yaw, k, score, visible_tags: visible_tags.into_iter().collect() };
        let better = best.as_ref().is_none_or(|(b, _, _)| {
            cand.score > b.score || (cand.score == b.score && (cand.k.abs(), cand.k) < (b.k.abs(), b.k))
        });
        if better {
            best = Some((cand.clone(), body_yaw, objects));
        }
        candidates.push(cand);
    }
    match best {
        Some((best, body_yaw, objects)) if best.score > 0.0 => Ok(ScanResult { best, body_yaw, objects, candidates }),
        _ => Err(SkillError::NoInformativeView),
    }
}

/// Body yaw that points the camera's horizontal axis along `camera_yaw`.
pub fn body_yaw_for(camera: &CameraModel, camera_yaw: f64) -> f64 {
    wrap_angle(camera_yaw - camera_heading_offset(camera))
}

/// Answers a question about the landmarks in the selected view.
pub trait QaBackend {
    fn answer(&self, question: &str, objects: &[VisibleObject]) -> Result<String, SkillError>;
}

/// Describes the visible landmark that best matches the question: most tag
/// overlap, then largest bbox, then smallest landmark id.
#[derive(Debug, Clone, Default)]
pub struct MockQa {
    pub landmarks: Vec<LandmarkNode>,
}

impl MockQa {
    pub fn new(landmarks: Vec<LandmarkNode>) -> Self {
        Self { landmarks }
    }
}

impl QaBackend for MockQa {
    fn answer(&self, question: &str, objects: &[VisibleObject]) -> Result<String, SkillError> {
        let q = content_tokens(question);
        let q = &q;
        let best = objects
            .iter()
            .flat_map(|o| {
                self.landmarks.iter().filter(|l| o.landmark_tags.contains(&l.id)).map(move |l| {
                    let names = [l.id.as_str(), l.name.as_str()];
                    let tags = o.tags().chain(names).chain(l.aliases.iter().map(String::as_str));
                    (overlap(q, tags), o.bbox_area(), l)
                })
            })
            .max_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.total_cmp(&b.1)).then_with(|| b.2.id.cmp(&a.2.id)));
        Ok(match best {
            Some((_, _, l)) => format!("{} [{}]", l.description, l.orientation_tag),
            None => NO_LANDMARK_ANSWER.to_string(),
        })
    }
}

pub fn answer_question(question: &str, view: &ScanResult, backend: &dyn QaBackend) -> Result<String, SkillError> {
    backend.answer(question, &view.objects)
}
