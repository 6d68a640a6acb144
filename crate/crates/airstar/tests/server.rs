use std::sync::mpsc;
use std::time::Duration;

use airstar::live::{runtime, spawn_server};
use airstar::server::{router, Hub};
use airstar_core::wire::{decode, encode, EventLevel, WireMessage};
use futures_util::{SinkExt, StreamExt};
use tokio_tungstenite::tungstenite::Message;

#[test]
fn scenario_endpoint() {
    let rt = runtime().unwrap();
    let (tx, _rx) = mpsc::channel();
    let with = spawn_server(&rt, "127.0.0.1:0", router(Hub::new(tx.clone(), Some(r#"{"seed":1}"#.into())))).unwrap();
    let without = spawn_server(&rt, "127.0.0.1:0", router(Hub::new(tx, None))).unwrap();

    let resp = reqwest::blocking::get(format!("http://{with}/scenario")).unwrap();
    assert_eq!(resp.status(), 200);
    assert_eq!(resp.headers()["content-type"], "application/json");
    assert_eq!(resp.json::<serde_json::Value>().unwrap()["seed"], 1);
    assert_eq!(reqwest::blocking::get(format!("http://{without}/scenario")).unwrap().status(), 404);
}

#[test]
fn websocket_round_trip() {
    let rt = runtime().unwrap();
    let (tx, rx) = mpsc::channel();
    let hub = Hub::new(tx, None);
    let addr = spawn_server(&rt, "127.0.0.1:0", router(hub.clone())).unwrap();

    rt.block_on(async {
        let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();
        let command = WireMessage::Command { text: "Take my picture.".into() };
        let frame = format!("{}\n{}", encode(&command), encode(&WireMessage::Click { u: 10.0, v: 20.0 }));
        ws.send(Message::Text(frame.into())).await.unwrap();

        // Garbage and server-only types get an error event; the socket stays up.
        ws.send(Message::Text("{not json".into())).await.unwrap();
        let reply = ws.next().await.unwrap().unwrap();
        let event = decode(reply.to_text().unwrap()).unwrap();
        assert!(matches!(event, WireMessage::Event { level: EventLevel::Error, .. }), "{event:?}");
        ws.send(Message::Text(encode(&WireMessage::Answer { text: "x".into() }).into())).await.unwrap();
        let reply = decode(ws.next().await.unwrap().unwrap().to_text().unwrap()).unwrap();
        assert!(matches!(reply, WireMessage::Event { level: EventLevel::Error, ref text, .. } if text.contains("answer")));

        let out = WireMessage::event(EventLevel::Info, "hello");
        hub.broadcast(&out);
        let got = ws.next().await.unwrap().unwrap();
        assert_eq!(got.to_text().unwrap(), encode(&out));
        assert!(!got.to_text().unwrap().contains('\n'));
        ws.close(None).await.unwrap();
    });

    let timeout = Duration::from_secs(2);
    assert_eq!(rx.recv_timeout(timeout).unwrap(), WireMessage::Command { text: "Take my picture.".into() });
    assert_eq!(rx.recv_timeout(timeout).unwrap(), WireMessage::Click { u: 10.0, v: 20.0 });
    assert!(rx.try_recv().is_err());
}

#[test]
fn broadcast_reaches_every_client() {
    let rt = runtime().unwrap();
    let (tx, _rx) = mpsc::channel();
    let hub = Hub::new(tx, None);
    let addr = spawn_server(&rt, "127.0.0.1:0", router(hub.clone())).unwrap();
    rt.block_on(async {
        let url = format!("ws://{addr}/ws");
        let (mut a, _) = tokio_tungstenite::connect_async(&url).await.unwrap();
        let (mut b, _) = tokio_tungstenite::connect_async(&url).await.unwrap();
        while hub.outbound.receiver_count() < 2 {
            tokio::time::sleep(Duration::from_millis(5)).await;
        }
        let m = WireMessage::Answer { text: "42".into() };
        hub.broadcast(&m);
        for ws in [&mut a, &mut b] {
            let got = ws.next().await.unwrap().unwrap();
            assert_eq!(decode(got.to_text().unwrap()).unwrap(), m);
        }
    });
}
