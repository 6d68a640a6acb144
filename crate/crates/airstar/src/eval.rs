//! Named evaluation suites: each mission runs headless from a fresh world
//! and is reduced to a few metrics.

use airstar_core::config::Config;
use airstar_core::runtime::run_headless;
use airstar_core::station::MissionResult;
use airstar_core::world::{parse_scenario, World};
use serde::Serialize;

pub const CAMPUS_SCENARIO: &str = include_str!("../../core/fixtures/campus.json");

pub const CAMPUS_MISSIONS: [&str; 6] = [
    "Hi AirStar, guide me to the badminton court.",
    "What does the sign near the library say?",
    "Fly ahead of the red car",
    "Follow the red car",
    "Take my picture",
    "Go to the teaching building",
];

pub const SUITES: [&str; 2] = ["campus", "empty"];

pub struct Suite {
    pub scenario: &'static str,
    pub missions: Vec<String>,
}

pub fn suite(name: &str) -> Option<Suite> {
    match name {
        "campus" => Some(Suite { scenario: CAMPUS_SCENARIO, missions: CAMPUS_MISSIONS.map(String::from).to_vec() }),
        "empty" => Some(Suite { scenario: CAMPUS_SCENARIO, missions: vec![] }),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MissionMetrics {
    pub instruction: String,
    pub result: MissionResult,
    pub success: bool,
    pub path_length: f64,
    /// Smallest route clearance over the mission; `None` without a route.
    pub min_clearance: Option<f64>,
    /// Required clearance of the route that set `min_clearance`.
    pub c_min: Option<f64>,
    pub replans: usize,
    pub ticks: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub suite: String,
    pub missions: Vec<MissionMetrics>,
    /// `None` for an empty suite.
    pub success_rate: Option<f64>,
}

pub fn evaluate(name: &str, cfg: &Config) -> anyhow::Result<EvalReport> {
    let s = suite(name).ok_or_else(|| anyhow::anyhow!("unknown suite {name:?} (known: {})", SUITES.join(", ")))?;
    let base: World = parse_scenario(s.scenario)?;
    let mut missions = vec![];
    for m in &s.missions {
        let report = run_headless(base.clone(), cfg, std::slice::from_ref(m), vec![], None)?;
        let Some(sum) = report.summaries.first() else {
            anyhow::bail!("launch failed before {m:?}");
        };
        let tightest = sum.routes.iter().min_by(|a, b| (a.clearance - a.c_min).total_cmp(&(b.clearance - b.c_min)));
        missions.push(MissionMetrics {
            instruction: m.clone(),
            result: sum.result,
            success: sum.result == MissionResult::Succeeded,
            path_length: sum.path_length,
            min_clearance: tightest.map(|r| r.clearance),
            c_min: tightest.map(|r| r.c_min),
            replans: sum.replans(),
            ticks: sum.end_tick - sum.start_tick,
        });
    }
    let success_rate = (!missions.is_empty())
        .then(|| missions.iter().filter(|m| m.success).count() as f64 / missions.len() as f64);
    Ok(EvalReport { suite: name.into(), missions, success_rate })
}

pub fn table(r: &EvalReport) -> String {
    let mut out = format!(
        "{:<48} {:>9} {:>9} {:>9} {:>7} {:>6}\n",
        "mission", "result", "path_m", "clear_m", "replans", "ticks"
    );
    for m in &r.missions {
        let clear = m.min_clearance.map_or("-".to_string(), |c| format!("{c:.2}"));
        out.push_str(&format!(
            "{:<48} {:>9} {:>9.1} {:>9} {:>7} {:>6}\n",
            m.instruction.chars().take(48).collect::<String>(),
            format!("{:?}", m.result).to_lowercase(),
            m.path_length,
            clear,
            m.replans,
            m.ticks
        ));
    }
    match r.success_rate {
        Some(s) => out.push_str(&format!("success rate: {s:.2} ({} missions)\n", r.missions.len())),
        None => out.push_str("no missions\n"),
    }
    out
}
