//! Replays a recorded NDJSON run to clients at the original tick cadence.

use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use airstar_core::mission::MissionState;
use airstar_core::wire::{decode_all, WireMessage};
use airstar_core::world::TICK_DT;
use anyhow::Context;
use serde::Serialize;

use crate::live::{runtime, spawn_server, stop_on_ctrl_c};
use crate::server::{router, Hub};

pub fn load(path: &Path) -> anyhow::Result<Vec<WireMessage>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    decode_all(&text).with_context(|| format!("decoding {}", path.display()))
}

/// Events are flagged as replayed; everything else passes through.
pub fn mark(msg: WireMessage) -> WireMessage {
    match msg {
        WireMessage::Event { level, text, .. } => WireMessage::Event { level, text, replay: true },
        m => m,
    }
}

/// Each message with its send offset from the start of the replay. Offsets
/// follow the telemetry ticks; other messages go out with the preceding
/// telemetry.
pub fn schedule(msgs: Vec<WireMessage>) -> Vec<(Duration, WireMessage)> {
    let mut first = None;
    let mut offset = Duration::ZERO;
    msgs.into_iter()
        .map(|m| {
            if let WireMessage::Telemetry { tick, .. } = &m {
                let t0 = *first.get_or_insert(*tick);
                offset = Duration::from_secs_f64(tick.saturating_sub(t0) as f64 * TICK_DT);
            }
            (offset, mark(m))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordSummary {
    pub messages: usize,
    pub telemetry: usize,
    pub first_tick: Option<u64>,
    pub last_tick: Option<u64>,
    pub final_mission_state: Option<MissionState>,
    pub answers: Vec<String>,
}

pub fn summarize(msgs: &[WireMessage]) -> RecordSummary {
    let ticks: Vec<(u64, MissionState)> = msgs
        .iter()
        .filter_map(|m| match m {
            WireMessage::Telemetry { tick, mission_state, .. } => Some((*tick, *mission_state)),
            _ => None,
        })
        .collect();
    RecordSummary {
        messages: msgs.len(),
        telemetry: ticks.len(),
        first_tick: ticks.first().map(|t| t.0),
        last_tick: ticks.last().map(|t| t.0),
        final_mission_state: ticks.last().map(|t| t.1),
        answers: msgs
            .iter()
            .filter_map(|m| match m {
                WireMessage::Answer { text } => Some(text.clone()),
                _ => None,
            })
            .collect(),
    }
}

/// Serves the record on `/ws`, starting when the first client connects.
/// Keeps serving afterwards until Ctrl-C unless `once` is set.
pub fn serve(msgs: Vec<WireMessage>, listen: &str, scenario: Option<String>, once: bool) -> anyhow::Result<()> {
    let rt = runtime()?;
    let (tx, _rx) = mpsc::channel();
    let hub = Hub::new(tx, scenario);
    spawn_server(&rt, listen, router(Arc::clone(&hub)))?;
    let stop = Arc::new(AtomicBool::new(false));
    stop_on_ctrl_c(&rt, Arc::clone(&stop));
    while hub.outbound.receiver_count() == 0 {
        if stop.load(Ordering::Relaxed) {
            return Ok(());
        }
        std::thread::sleep(Duration::from_millis(20));
    }
    let start = Instant::now();
    for (offset, m) in schedule(msgs) {
        if stop.load(Ordering::Relaxed) {
            return Ok(());
        }
        let due = start + offset;
        if let Some(wait) = due.checked_duration_since(Instant::now()) {
            std::thread::sleep(wait);
        }
        hub.broadcast(&m);
    }
    log::info!("replay finished after {:.1} s", start.elapsed().as_secs_f64());
    while !once && !stop.load(Ordering::Relaxed) {
        std::thread::sleep(Duration::from_millis(100));
    }
    // Give clients a moment to drain the last frames.
    std::thread::sleep(Duration::from_millis(200));
    Ok(())
}
