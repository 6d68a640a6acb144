//! Client-facing HTTP/WebSocket endpoints: `/ws` carries NDJSON wire
//! messages both ways, `GET /scenario` returns the active scenario.

use std::sync::mpsc;
use std::sync::Arc;

use airstar_core::wire::{decode, decode_error_event, encode, EventLevel, WireMessage};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::header;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use tokio::sync::broadcast;

/// Shared state behind the router.
pub struct Hub {
    /// Encoded messages fanned out to every client.
    pub outbound: broadcast::Sender<String>,
    /// Decoded client messages, in arrival order.
    pub inbound: mpsc::Sender<WireMessage>,
    /// Scenario document served at `/scenario`; `None` answers 404.
    pub scenario: Option<String>,
}

impl Hub {
    pub fn new(inbound: mpsc::Sender<WireMessage>, scenario: Option<String>) -> Arc<Self> {
        let (outbound, _) = broadcast::channel(4096);
        Arc::new(Self { outbound, inbound, scenario })
    }

    /// Sends to every connected client. Dropped silently when nobody listens.
    pub fn broadcast(&self, msg: &WireMessage) {
        let _ = self.outbound.send(encode(msg));
    }
}

pub fn router(hub: Arc<Hub>) -> Router {
    Router::new().route("/ws", get(ws)).route("/scenario", get(scenario)).with_state(hub)
}

async fn scenario(State(hub): State<Arc<Hub>>) -> axum::response::Response {
    match &hub.scenario {
        Some(s) => ([(header::CONTENT_TYPE, "application/json")], s.clone()).into_response(),
        None => (axum::http::StatusCode::NOT_FOUND, "no scenario loaded").into_response(),
    }
}

async fn ws(upgrade: WebSocketUpgrade, State(hub): State<Arc<Hub>>) -> axum::response::Response {
    upgrade.on_upgrade(move |socket| client(socket, hub))
}

/// Decodes one frame's lines. Valid client messages are forwarded; anything
/// else yields an error event for the sender only.
fn handle_text(text: &str, hub: &Hub) -> Vec<WireMessage> {
    let mut replies = vec![];
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        match decode(line) {
            Ok(m) if m.is_client() => {
                if hub.inbound.send(m).is_err() {
                    replies.push(WireMessage::event(EventLevel::Error, "station is not running"));
                }
            }
            Ok(m) => replies.push(WireMessage::event(
                EventLevel::Error,
                format!("clients may not send {} messages", m.type_name()),
            )),
            Err(e) => replies.push(decode_error_event(&e)),
        }
    }
    replies
}

async fn client(socket: WebSocket, hub: Arc<Hub>) {
    let (mut sink, mut stream) = socket.split();
    let mut feed = hub.outbound.subscribe();
    loop {
        tokio::select! {
            msg = feed.recv() => match msg {
                Ok(line) => {
                    if sink.send(Message::Text(line.into())).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => log::warn!("client lagged, skipped {n} messages"),
                Err(broadcast::error::RecvError::Closed) => break,
            },
            incoming = stream.next() => match incoming {
                Some(Ok(Message::Text(text))) => {
                    for reply in handle_text(text.as_str(), &hub) {
                        if sink.send(Message::Text(encode(&reply).into())).await.is_err() {
                            return;
                        }
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
        }
    }
}
