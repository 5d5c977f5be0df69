//! Websocket endpoint: one engine per connection.
//!
//! The engine runs on its own thread at the configured tick rate. The
//! socket task only forwards inbound frames to it and writes out what it
//! produces.

use std::sync::mpsc::{self, Receiver, TryRecvError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use axum::extract::ws::{close_code, CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use tokio::net::TcpListener;
use tokio::sync::mpsc::{unbounded_channel, UnboundedSender};

use guidesim_core::engine::SimConfig;
use guidesim_core::gridworld::World;
use guidesim_core::protocol::{LiveSession, ServerMessage};

use crate::build_sim;

#[derive(Debug, Clone)]
pub struct ServeState {
    pub world: World,
    pub config: SimConfig,
}

enum Outgoing {
    Frame(String),
    Close(u16, &'static str),
}

pub fn router(state: ServeState) -> Router {
    Router::new()
        .route("/ws", get(upgrade))
        .with_state(Arc::new(state))
}

pub async fn serve(listener: TcpListener, state: ServeState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<Arc<ServeState>>) -> Response {
    ws.on_upgrade(move |socket| session(socket, state))
}

async fn session(mut socket: WebSocket, state: Arc<ServeState>) {
    let sim = match build_sim(state.world.clone(), state.config.clone()) {
        Ok(sim) => sim,
        Err(e) => {
            let msg = ServerMessage::error(0.0, e.to_string()).to_json();
            let _ = socket.send(Message::Text(msg.into())).await;
            let _ = socket.send(close(close_code::ERROR, "engine failed to start")).await;
            return;
        }
    };
    let (in_tx, in_rx) = mpsc::channel::<String>();
    let (out_tx, mut out_rx) = unbounded_channel();
    let engine = thread::spawn(move || drive(LiveSession::new(sim), in_rx, out_tx));

    loop {
        tokio::select! {
            inbound = socket.recv() => match inbound {
                Some(Ok(Message::Text(text))) => {
                    if in_tx.send(text.to_string()).is_err() {
                        break;
                    }
                }
                Some(Ok(Message::Binary(bytes))) => {
                    if in_tx.send(String::from_utf8_lossy(&bytes).into_owned()).is_err() {
                        break;
                    }
                }
                Some(Ok(Message::Ping(_) | Message::Pong(_))) => {}
                Some(Ok(Message::Close(_)) | Err(_)) | None => break,
            },
            out = out_rx.recv() => match out {
                Some(Outgoing::Frame(text)) => {
                    if socket.send(Message::Text(text.into())).await.is_err() {
                        break;
                    }
                }
                Some(Outgoing::Close(code, reason)) => {
                    let _ = socket.send(close(code, reason)).await;
                    break;
                }
                None => break,
            },
        }
    }
    drop(in_tx);
    drop(out_rx);
    let _ = tokio::task::spawn_blocking(move || engine.join()).await;
}

fn close(code: u16, reason: &'static str) -> Message {
    Message::Close(Some(CloseFrame {
        code,
        reason: reason.into(),
    }))
}

fn drive(mut live: LiveSession, inbound: Receiver<String>, out: UnboundedSender<Outgoing>) {
    let period = Duration::from_secs_f64(1.0 / f64::from(live.sim.config().tick_hz));
    let send = |m: ServerMessage| out.send(Outgoing::Frame(m.to_json())).is_ok();
    for m in live.hello() {
        if !send(m) {
            return;
        }
    }
    let mut due = Instant::now();
    loop {
        loop {
            match inbound.try_recv() {
                Ok(frame) => {
                    if let Err(msg) = live.receive(&frame) {
                        send(msg);
                        let _ = out.send(Outgoing::Close(close_code::INVALID, "malformed frame"));
                        return;
                    }
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => return,
            }
        }
        for m in live.step() {
            if !send(m) {
                return;
            }
        }
        if live.sim.is_shutdown() {
            live.sim.finish();
            let _ = out.send(Outgoing::Close(close_code::NORMAL, "shutdown"));
            return;
        }
        due += period;
        let now = Instant::now();
        if due > now {
            thread::sleep(due - now);
        } else {
            due = now;
        }
    }
}
