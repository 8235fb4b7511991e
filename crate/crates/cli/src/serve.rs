//! HTTP and WebSocket transport for playground sessions. Every connection
//! gets its own copy of the template session, driven by one task.

use std::path::PathBuf;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use tokio::net::TcpListener;
use tokio::time::{interval, MissedTickBehavior};
use tower_http::services::ServeDir;

use retro_core::playground::{ServerMessage, SessionState};

pub fn router(template: SessionState, static_dir: Option<PathBuf>) -> Router {
    let app = Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/ws", get(upgrade))
        .with_state(template);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

pub async fn serve(listener: TcpListener, app: Router) -> anyhow::Result<()> {
    axum::serve(listener, app).await?;
    Ok(())
}

async fn upgrade(ws: WebSocketUpgrade, State(template): State<SessionState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| run_session(socket, template))
}

async fn send(socket: &mut WebSocket, msg: &ServerMessage) -> bool {
    socket.send(Message::Text(msg.to_json().into())).await.is_ok()
}

async fn run_session(mut socket: WebSocket, mut state: SessionState) {
    let mut ticker = interval(state.tick_period());
    ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
    ticker.tick().await;
    if !send(&mut socket, &state.snapshot()).await {
        return;
    }
    loop {
        tokio::select! {
            _ = ticker.tick() => {
                state.tick();
                if !send(&mut socket, &state.snapshot()).await {
                    break;
                }
            }
            incoming = socket.recv() => {
                let reply = match incoming {
                    Some(Ok(Message::Text(text))) => state.handle_message(text.as_str()),
                    Some(Ok(Message::Binary(_))) => ServerMessage::Error {
                        message: "expected a UTF-8 JSON text message".into(),
                    },
                    Some(Ok(Message::Ping(_) | Message::Pong(_))) => continue,
                    Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                };
                if !send(&mut socket, &reply).await {
                    break;
                }
            }
        }
    }
}
