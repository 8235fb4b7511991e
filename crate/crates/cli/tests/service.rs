use std::time::{Duration, Instant};

use futures::{SinkExt, StreamExt};
use serde_json::Value;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::Message;

use retro_core::fixtures::{generate, Domain, FixtureSpec};
use retro_core::playground::SessionState;
use retro_core::SpriteId;

fn session(tick: Duration) -> SessionState {
    let f = generate(&FixtureSpec::new(Domain::Chase, 7)).unwrap();
    SessionState::new(
        f.trace.episodes()[0][0].clone(),
        f.reference.clone(),
        f.trace.sprites().to_vec(),
        SpriteId(0),
        tick,
    )
    .unwrap()
}

async fn start(tick: Duration, static_dir: Option<std::path::PathBuf>) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let app = retro_cli::serve::router(session(tick), static_dir);
    tokio::spawn(retro_cli::serve::serve(listener, app));
    addr
}

async fn http_get(addr: &str, path: &str) -> String {
    let mut stream = TcpStream::connect(addr).await.unwrap();
    let req = format!("GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n");
    stream.write_all(req.as_bytes()).await.unwrap();
    let mut out = String::new();
    stream.read_to_string(&mut out).await.unwrap();
    out
}

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<TcpStream>>;

async fn next_json(ws: &mut Ws) -> Value {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(5), ws.next()).await.unwrap().unwrap().unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(t.as_str()).unwrap();
        }
    }
}

/// Reads until a message of the given type arrives.
async fn next_of(ws: &mut Ws, kind: &str) -> Value {
    loop {
        let v = next_json(ws).await;
        if v["type"] == kind {
            return v;
        }
    }
}

fn position_of(snapshot: &Value, id: u64) -> (u64, u64) {
    let w = snapshot["width"].as_u64().unwrap();
    let i = snapshot["cells"].as_array().unwrap().iter().position(|c| c.as_u64() == Some(id)).unwrap() as u64;
    (i % w, i / w)
}

#[tokio::test]
async fn healthz_answers_ok() {
    let addr = start(Duration::from_millis(250), None).await;
    let resp = http_get(&addr, "/healthz").await;
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.ends_with("ok"));
}

#[tokio::test]
async fn static_bundle_is_served_at_root() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>playground</html>").unwrap();
    let addr = start(Duration::from_millis(250), Some(dir.path().to_path_buf())).await;
    let resp = http_get(&addr, "/").await;
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.contains("<html>playground</html>"));
    assert!(http_get(&addr, "/missing.js").await.starts_with("HTTP/1.1 404"));
}

#[tokio::test]
async fn websocket_session_ticks_and_obeys_actions() {
    let addr = start(Duration::from_millis(40), None).await;
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();

    let first = next_of(&mut ws, "snapshot").await;
    assert_eq!(first["tick"], 0);
    assert_eq!(first["sprites"][1], "CHASER");

    // Stationary player: the chaser never gets farther away.
    let player = position_of(&first, 0);
    let dist = |s: &Value| {
        let c = position_of(s, 1);
        c.0.abs_diff(player.0) + c.1.abs_diff(player.1)
    };
    let mut d = dist(&first);
    let mut last_tick = 0;
    for _ in 0..8 {
        let s = next_of(&mut ws, "snapshot").await;
        assert!(s["tick"].as_u64().unwrap() > last_tick);
        last_tick = s["tick"].as_u64().unwrap();
        assert!(dist(&s) <= d);
        d = dist(&s);
    }

    ws.send(Message::text(r#"{"type":"action","dir":"up"}"#)).await.unwrap();
    let ack = next_of(&mut ws, "ack").await;
    assert!(ack["tick"].is_u64());
    let after = next_of(&mut ws, "snapshot").await;
    let moved = position_of(&after, 0);
    assert!(moved == player || (moved.0 == player.0 && moved.1 + 1 == player.1));

    ws.send(Message::text("not json")).await.unwrap();
    let err = next_of(&mut ws, "error").await;
    assert!(err["message"].as_str().unwrap().contains("malformed"));

    ws.send(Message::text(r#"{"type":"reset"}"#)).await.unwrap();
    let reset = next_json(&mut ws).await;
    let reset = if reset["tick"] == 0 { reset } else { next_of(&mut ws, "snapshot").await };
    assert_eq!(reset["cells"], first["cells"]);
}

#[tokio::test]
async fn default_tick_period_is_a_quarter_second() {
    let addr = start(retro_core::playground::DEFAULT_TICK, None).await;
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();
    next_of(&mut ws, "snapshot").await;
    let start = Instant::now();
    for _ in 0..4 {
        next_of(&mut ws, "snapshot").await;
    }
    let per_tick = start.elapsed() / 4;
    assert!(per_tick >= Duration::from_millis(200) && per_tick <= Duration::from_millis(300), "{per_tick:?}");
}

#[tokio::test]
async fn sessions_are_independent() {
    let addr = start(Duration::from_millis(30), None).await;
    let (mut a, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();
    for _ in 0..5 {
        next_of(&mut a, "snapshot").await;
    }
    let (mut b, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();
    assert_eq!(next_of(&mut b, "snapshot").await["tick"], 0);
}
