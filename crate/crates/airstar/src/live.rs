//! Wall-clock operation: combined (both tiers in one process over delayed
//! in-memory channels), onboard-only and station-only over a `/link`
//! WebSocket.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::Duration;

use airstar_core::config::Config;
use airstar_core::onboard::{run_realtime, ChannelLink, Downlink, Onboard, OnboardLink, Uplink};
use airstar_core::runtime::{delayed_channel, drain, knowledge_store, ChannelIo};
use airstar_core::station::{MissionSummary, Station, StationIo};
use airstar_core::wire::{encode, WireMessage};
use airstar_core::world::{Scenario, Scene, World, TICK_DT};
use anyhow::Context;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use tokio::sync::broadcast;

use crate::remote;
use crate::server::{router, Hub};

pub fn tick_period() -> Duration {
    Duration::from_secs_f64(TICK_DT)
}

pub fn runtime() -> anyhow::Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

/// Binds `listen` and serves `app` in the background.
pub fn spawn_server(rt: &tokio::runtime::Runtime, listen: &str, app: Router) -> anyhow::Result<SocketAddr> {
    let listener = rt.block_on(tokio::net::TcpListener::bind(listen)).with_context(|| format!("binding {listen}"))?;
    let addr = listener.local_addr()?;
    rt.spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            log::error!("server stopped: {e}");
        }
    });
    log::info!("listening on {addr}");
    Ok(addr)
}

/// Sets `stop` on Ctrl-C.
pub fn stop_on_ctrl_c(rt: &tokio::runtime::Runtime, stop: Arc<AtomicBool>) {
    rt.spawn(async move {
        if tokio::signal::ctrl_c().await.is_ok() {
            stop.store(true, Ordering::Relaxed);
        }
    });
}

/// Publishes to connected clients and, optionally, to a record file.
pub struct Publisher {
    hub: Arc<Hub>,
    record: Option<BufWriter<File>>,
}

impl Publisher {
    pub fn new(hub: Arc<Hub>, record: Option<&Path>) -> anyhow::Result<Self> {
        let record = match record {
            Some(p) => Some(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
            None => None,
        };
        Ok(Self { hub, record })
    }

    pub fn publish(&mut self, msg: WireMessage) {
        if let Some(w) = &mut self.record {
            if let Err(e) = writeln!(w, "{}", encode(&msg)) {
                log::error!("record write failed: {e}");
                self.record = None;
            }
        }
        self.hub.broadcast(&msg);
    }

    pub fn flush(&mut self) {
        if let Some(w) = &mut self.record {
            let _ = w.flush();
        }
    }
}

/// Launches, then either runs `missions` in order or serves client commands
/// until `stop` is set.
fn drive<Io: StationIo>(station: &mut Station<Io>, missions: &[String], stop: &AtomicBool) -> Vec<MissionSummary> {
    if !station.launch() {
        return vec![];
    }
    if missions.is_empty() {
        while !stop.load(Ordering::Relaxed) && station.serve_tick() {}
        return station.summaries().to_vec();
    }
    missions.iter().map(|m| station.run_command(m)).collect()
}

pub struct LiveOptions<'a> {
    pub listen: Option<&'a str>,
    pub record: Option<&'a Path>,
    pub missions: &'a [String],
}

/// Both tiers in this process, linked by channels with the configured
/// latency. Returns when the missions are done (or on Ctrl-C when none are
/// given).
pub fn run_combined(world: World, cfg: &Config, opts: &LiveOptions) -> anyhow::Result<Vec<MissionSummary>> {
    let rt = runtime()?;
    let scene = Arc::clone(&world.scene);
    let (client_tx, client_rx) = mpsc::channel();
    let hub = Hub::new(client_tx, Some(scenario_json(&scene)));
    if let Some(listen) = opts.listen {
        spawn_server(&rt, listen, router(Arc::clone(&hub)))?;
    }
    let stop = Arc::new(AtomicBool::new(false));
    stop_on_ctrl_c(&rt, Arc::clone(&stop));

    let (up_tx, up_rx) = delayed_channel::<Uplink>(cfg.latency, scene.seed);
    let (down_tx, down_rx) = delayed_channel::<Downlink>(cfg.latency, scene.seed.wrapping_add(1));
    let mut onboard = Onboard::new(world, cfg.track, cfg.onboard);
    let onboard_stop = Arc::clone(&stop);
    let onboard_thread = thread::spawn(move || {
        let mut link = ChannelLink { rx: up_rx, tx: down_tx };
        run_realtime(&mut onboard, &mut link, tick_period(), None, &onboard_stop);
    });

    let mut publisher = Publisher::new(hub, opts.record)?;
    let kb = knowledge_store(&scene, cfg)?;
    let backends = remote::backends(&scene, cfg)?;
    let io = ChannelIo { tx: up_tx, rx: down_rx, clients: client_rx, publish: |m| publisher.publish(m) };
    let mut station = Station::new(io, scene, cfg.clone(), backends, kb);
    let summaries = drive(&mut station, opts.missions, &stop);
    drop(station);
    publisher.flush();
    stop.store(true, Ordering::Relaxed);
    let _ = onboard_thread.join();
    Ok(summaries)
}

pub fn scenario_json(scene: &Scene) -> String {
    serde_json::to_string(&Scenario::from_scene(scene)).expect("scenario serializes")
}

/// Onboard side of a `/link` connection. Uplinks arrive from the socket
/// task; reports go out through a broadcast channel.
struct SocketLink {
    rx: mpsc::Receiver<Uplink>,
    out: broadcast::Sender<String>,
    connected: Arc<AtomicBool>,
}

impl OnboardLink for SocketLink {
    fn poll(&mut self) -> (Vec<Uplink>, bool) {
        let mut inbox = vec![];
        drain(&self.rx, &mut inbox);
        (inbox, self.connected.load(Ordering::Relaxed))
    }

    fn send(&mut self, msg: Downlink) {
        let _ = self.out.send(serde_json::to_string(&msg).expect("downlink serializes"));
    }
}

#[derive(Clone)]
struct LinkState {
    uplinks: mpsc::Sender<Uplink>,
    out: broadcast::Sender<String>,
    connected: Arc<AtomicBool>,
}

async fn link_ws(upgrade: WebSocketUpgrade, State(s): State<LinkState>) -> axum::response::Response {
    upgrade.on_upgrade(move |socket| link_session(socket, s))
}

async fn link_session(socket: WebSocket, s: LinkState) {
    if s.connected.swap(true, Ordering::Relaxed) {
        log::warn!("rejecting second station connection");
        return;
    }
    log::info!("station connected");
    let (mut sink, mut stream) = socket.split();
    let mut feed = s.out.subscribe();
    loop {
        tokio::select! {
            m = feed.recv() => match m {
                Ok(line) => if sink.send(Message::Text(line.into())).await.is_err() { break },
                Err(broadcast::error::RecvError::Lagged(_)) => {}
                Err(broadcast::error::RecvError::Closed) => break,
            },
            incoming = stream.next() => match incoming {
                Some(Ok(Message::Text(t))) => match serde_json::from_str::<Uplink>(t.as_str()) {
                    Ok(u) => { let _ = s.uplinks.send(u); }
                    Err(e) => log::warn!("bad uplink: {e}"),
                },
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
        }
    }
    s.connected.store(false, Ordering::Relaxed);
    log::warn!("station disconnected");
}

/// Onboard tier alone: ticks in real time and serves `/link` for one
/// station. Holds position while no station is connected.
pub fn run_onboard(world: World, cfg: &Config, listen: &str) -> anyhow::Result<()> {
    let rt = runtime()?;
    let (up_tx, up_rx) = mpsc::channel();
    let (out, _) = broadcast::channel(256);
    let connected = Arc::new(AtomicBool::new(false));
    let state = LinkState { uplinks: up_tx, out: out.clone(), connected: Arc::clone(&connected) };
    let app = Router::new().route("/link", get(link_ws)).with_state(state);
    spawn_server(&rt, listen, app)?;
    let stop = Arc::new(AtomicBool::new(false));
    stop_on_ctrl_c(&rt, Arc::clone(&stop));
    let mut onboard = Onboard::new(world, cfg.track, cfg.onboard);
    let mut link = SocketLink { rx: up_rx, out, connected };
    run_realtime(&mut onboard, &mut link, tick_period(), None, &stop);
    Ok(())
}

/// Station tier alone, connected to an onboard process at `onboard_url`
/// (a `ws://…/link` address).
pub fn run_station(world: World, cfg: &Config, onboard_url: &str, opts: &LiveOptions) -> anyhow::Result<Vec<MissionSummary>> {
    let rt = runtime()?;
    let scene = Arc::clone(&world.scene);
    let (client_tx, client_rx) = mpsc::channel();
    let hub = Hub::new(client_tx, Some(scenario_json(&scene)));
    if let Some(listen) = opts.listen {
        spawn_server(&rt, listen, router(Arc::clone(&hub)))?;
    }
    let stop = Arc::new(AtomicBool::new(false));
    stop_on_ctrl_c(&rt, Arc::clone(&stop));

    let (socket, _) = rt
        .block_on(tokio_tungstenite::connect_async(onboard_url))
        .with_context(|| format!("connecting to {onboard_url}"))?;
    let (mut sink, mut stream) = socket.split();
    let (up_tx, up_rx) = mpsc::channel::<Uplink>();
    let (down_tx, down_rx) = mpsc::channel::<Downlink>();
    let (wire_tx, mut wire_rx) = tokio::sync::mpsc::unbounded_channel::<String>();
    thread::spawn(move || {
        while let Ok(u) = up_rx.recv() {
            if wire_tx.send(serde_json::to_string(&u).expect("uplink serializes")).is_err() {
                break;
            }
        }
    });
    rt.spawn(async move {
        use tokio_tungstenite::tungstenite::Message as TMessage;
        while let Some(line) = wire_rx.recv().await {
            if sink.send(TMessage::text(line)).await.is_err() {
                break;
            }
        }
    });
    rt.spawn(async move {
        use tokio_tungstenite::tungstenite::Message as TMessage;
        while let Some(Ok(m)) = stream.next().await {
            if let TMessage::Text(t) = m {
                match serde_json::from_str::<Downlink>(t.as_str()) {
                    Ok(d) => {
                        if down_tx.send(d).is_err() {
                            break;
                        }
                    }
                    Err(e) => log::warn!("bad downlink: {e}"),
                }
            }
        }
    });

    let mut publisher = Publisher::new(hub, opts.record)?;
    let kb = knowledge_store(&scene, cfg)?;
    let backends = remote::backends(&scene, cfg)?;
    let io = ChannelIo { tx: up_tx, rx: down_rx, clients: client_rx, publish: |m| publisher.publish(m) };
    let mut station = Station::new(io, scene, cfg.clone(), backends, kb);
    let summaries = drive(&mut station, opts.missions, &stop);
    drop(station);
    publisher.flush();
    Ok(summaries)
}
