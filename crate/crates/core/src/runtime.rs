//! Wiring of the onboard and station tiers: a deterministic lockstep
//! transport for headless runs and a threaded, delayed channel transport for
//! wall-clock runs.

use std::collections::VecDeque;
use std::ops::Range;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, TryRecvError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Config, Latency};
use crate::knowledge::{KnowledgeError, KnowledgeStore};
use crate::mission::MissionState;
use crate::onboard::{Downlink, Onboard, Uplink};
use crate::station::{Backends, MissionResult, MissionSummary, Station, StationIo};
use crate::wire::{encode, WireMessage};
use crate::world::{Scene, World, TICK_DT};

/// Draws one-way link delays from `mean ± jitter` (uniform), never negative.
#[derive(Debug, Clone)]
pub struct DelayModel {
    latency: Latency,
    rng: ChaCha8Rng,
}

impl DelayModel {
    pub fn new(latency: Latency, seed: u64) -> Self {
        Self { latency, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn sample_ms(&mut self) -> f64 {
        let j = self.latency.jitter_ms.abs();
        let noise = if j > 0.0 { self.rng.random_range(-j..=j) } else { 0.0 };
        (self.latency.mean_ms + noise).max(0.0)
    }

    /// Delay rounded to whole ticks.
    pub fn sample_ticks(&mut self) -> u64 {
        (self.sample_ms() / (TICK_DT * 1000.0)).round() as u64
    }
}

/// Lockstep transport: each `recv` advances the onboard tier by simulated
/// ticks until a report is due. Everything published, and every client
/// message consumed, is appended to an NDJSON record.
pub struct SimIo {
    pub onboard: Onboard,
    now: u64,
    max_ticks: u64,
    delays: DelayModel,
    uplinks: VecDeque<(u64, Uplink)>,
    downlinks: VecDeque<(u64, Downlink)>,
    clients: VecDeque<(u64, WireMessage)>,
    outages: Vec<Range<u64>>,
    record: Vec<String>,
}

impl SimIo {
    pub fn new(onboard: Onboard, latency: Latency, seed: u64, max_ticks: u64) -> Self {
        Self {
            onboard,
            now: 0,
            max_ticks,
            delays: DelayModel::new(latency, seed),
            uplinks: VecDeque::new(),
            downlinks: VecDeque::new(),
            clients: VecDeque::new(),
            outages: vec![],
            record: vec![],
        }
    }

    /// Queues client messages, each delivered once the simulation reaches
    /// its tick.
    pub fn script(&mut self, timed: impl IntoIterator<Item = (u64, WireMessage)>) {
        self.clients.extend(timed);
        self.clients.make_contiguous().sort_by_key(|(t, _)| *t);
    }

    /// Drops the link during the given tick range.
    pub fn outage(&mut self, ticks: Range<u64>) {
        self.outages.push(ticks);
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn pending_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn record(&self) -> &[String] {
        &self.record
    }

    pub fn take_record(&mut self) -> Vec<String> {
        std::mem::take(&mut self.record)
    }

    fn connected(&self, tick: u64) -> bool {
        !self.outages.iter().any(|r| r.contains(&tick))
    }

    fn due(queue_back: Option<u64>, at: u64) -> u64 {
        queue_back.map_or(at, |b| b.max(at))
    }
}

impl StationIo for SimIo {
    fn send(&mut self, msg: Uplink) {
        let at = self.now + self.delays.sample_ticks();
        let due = Self::due(self.uplinks.back().map(|u| u.0), at);
        self.uplinks.push_back((due, msg));
    }

    fn recv(&mut self) -> Option<Downlink> {
        loop {
            if self.downlinks.front().is_some_and(|(due, _)| *due <= self.now) {
                return self.downlinks.pop_front().map(|(_, d)| d);
            }
            if self.now >= self.max_ticks {
                return None;
            }
            let connected = self.connected(self.now);
            let mut inbox = vec![];
            while self.uplinks.front().is_some_and(|(due, _)| *due <= self.now) {
                let (_, m) = self.uplinks.pop_front().expect("checked");
                if connected {
                    inbox.push(m);
                }
            }
            let report = self.onboard.tick(inbox, connected);
            self.now += 1;
            if connected {
                let at = self.now + self.delays.sample_ticks();
                let due = Self::due(self.downlinks.back().map(|d| d.0), at);
                self.downlinks.push_back((due, report));
            }
        }
    }

    fn publish(&mut self, msg: WireMessage) {
        self.record.push(encode(&msg));
    }

    fn poll_client(&mut self) -> Option<WireMessage> {
        if self.clients.front().is_some_and(|(t, _)| *t <= self.now) {
            let (_, m) = self.clients.pop_front().expect("checked");
            self.record.push(encode(&m));
            return Some(m);
        }
        None
    }
}

/// Opens the configured journal (or an in-memory store) and loads the
/// scenario's knowledge entries into it.
pub fn knowledge_store(scene: &Scene, cfg: &Config) -> Result<KnowledgeStore, KnowledgeError> {
    let mut kb = match &cfg.knowledge_journal {
        Some(p) => KnowledgeStore::open(p)?,
        None => KnowledgeStore::in_memory(),
    };
    kb.ingest(scene.knowledge.iter().cloned())?;
    Ok(kb)
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub records: Vec<String>,
    pub summaries: Vec<MissionSummary>,
    pub launched: bool,
    pub final_state: MissionState,
    pub ticks: u64,
}

impl RunReport {
    /// Launched, every mission succeeded, and the vehicle is back in standby.
    pub fn ok(&self) -> bool {
        self.launched
            && self.summaries.iter().all(|s| s.result == MissionResult::Succeeded)
            && self.final_state == MissionState::StandbyHover
    }

    /// The record as one NDJSON document.
    pub fn ndjson(&self) -> String {
        let mut s = self.records.join("\n");
        s.push('\n');
        s
    }
}

/// Tick ceiling for a headless run.
pub const HEADLESS_MAX_TICKS: u64 = 50_000;

/// Headless run in simulated time: launch, then each mission in turn via a
/// `command` client message, then any remaining scripted client input.
pub fn run_headless(
    world: World,
    cfg: &Config,
    missions: &[String],
    timed: Vec<(u64, WireMessage)>,
    backends: Option<Backends>,
) -> Result<RunReport, KnowledgeError> {
    let scene = Arc::clone(&world.scene);
    let kb = knowledge_store(&scene, cfg)?;
    let backends = backends.unwrap_or_else(|| Backends::mock(&scene, cfg));
    let onboard = Onboard::new(world, cfg.track, cfg.onboard);
    let mut io = SimIo::new(onboard, cfg.latency, scene.seed, HEADLESS_MAX_TICKS);
    io.script(timed);
    let mut station = Station::new(io, scene, cfg.clone(), backends, kb);
    let launched = station.launch();
    if launched {
        for m in missions {
            let tick = station.io().now();
            station.io_mut().script([(tick, WireMessage::Command { text: m.clone() })]);
            let before = station.summaries().len();
            while station.summaries().len() == before {
                if !station.serve_tick() {
                    break;
                }
            }
        }
        while station.io().pending_clients() > 0 {
            if !station.serve_tick() {
                break;
            }
        }
    }
    let summaries = station.summaries().to_vec();
    let final_state = station.state();
    let mut io = station.into_io();
    let ticks = io.now();
    Ok(RunReport { records: io.take_record(), summaries, launched, final_state, ticks })
}

/// Station transport over channels to an onboard loop running in another
/// thread (or behind a network link). Published messages go to `publish`.
pub struct ChannelIo<P> {
    pub tx: Sender<Uplink>,
    pub rx: Receiver<Downlink>,
    pub clients: Receiver<WireMessage>,
    pub publish: P,
}

impl<P: FnMut(WireMessage)> StationIo for ChannelIo<P> {
    fn send(&mut self, msg: Uplink) {
        let _ = self.tx.send(msg);
    }

    fn recv(&mut self) -> Option<Downlink> {
        self.rx.recv().ok()
    }

    fn publish(&mut self, msg: WireMessage) {
        (self.publish)(msg);
    }

    fn poll_client(&mut self) -> Option<WireMessage> {
        self.clients.try_recv().ok()
    }
}

/// A channel whose messages arrive after a sampled one-way delay, in order.
pub fn delayed_channel<T: Send + 'static>(latency: Latency, seed: u64) -> (Sender<T>, Receiver<T>) {
    let (in_tx, in_rx) = mpsc::channel::<(Instant, T)>();
    let (out_tx, out_rx) = mpsc::channel();
    let (stamp_tx, stamp_rx) = mpsc::channel::<T>();
    // Stamp on send so queueing inside the relay does not add delay.
    thread::spawn(move || {
        while let Ok(m) = stamp_rx.recv() {
            if in_tx.send((Instant::now(), m)).is_err() {
                return;
            }
        }
    });
    thread::spawn(move || {
        let mut delays = DelayModel::new(latency, seed);
        let mut last_due = Instant::now();
        let mut queue: VecDeque<(Instant, T)> = VecDeque::new();
        let mut open = true;
        while open || !queue.is_empty() {
            let timeout = queue.front().map(|(due, _)| due.saturating_duration_since(Instant::now()));
            let got = match timeout {
                Some(t) => in_rx.recv_timeout(t),
                None => in_rx.recv().map_err(|_| RecvTimeoutError::Disconnected),
            };
            match got {
                Ok((sent, m)) => {
                    let due = (sent + Duration::from_secs_f64(delays.sample_ms() / 1000.0)).max(last_due);
                    last_due = due;
                    queue.push_back((due, m));
                }
                Err(RecvTimeoutError::Disconnected) => open = false,
                Err(RecvTimeoutError::Timeout) => {}
            }
            while queue.front().is_some_and(|(due, _)| *due <= Instant::now()) {
                let (_, m) = queue.pop_front().expect("checked");
                if out_tx.send(m).is_err() {
                    return;
                }
            }
            if !open {
                if let Some((due, _)) = queue.front() {
                    thread::sleep(due.saturating_duration_since(Instant::now()));
                }
            }
        }
    });
    (stamp_tx, out_rx)
}

/// Drains whatever is queued on `rx` without blocking; false once the
/// sender is gone.
pub fn drain<T>(rx: &Receiver<T>, out: &mut Vec<T>) -> bool {
    loop {
        match rx.try_recv() {
            Ok(m) => out.push(m),
            Err(TryRecvError::Empty) => return true,
            Err(TryRecvError::Disconnected) => return false,
        }
    }
}
