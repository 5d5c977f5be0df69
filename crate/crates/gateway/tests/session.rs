use std::net::{SocketAddr, TcpStream};
use std::sync::mpsc;
use std::thread;

use serde_json::Value;
use tungstenite::protocol::frame::coding::CloseCode;
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

use guidesim_core::engine::SimConfig;
use guidesim_core::gridworld::load_world;
use guidesim_gateway::server::{serve, ServeState};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures");

type Client = WebSocket<MaybeTlsStream<TcpStream>>;

fn start() -> SocketAddr {
    let map = std::fs::read_to_string(format!("{FIXTURES}/maps/office.map")).unwrap();
    let pois = std::fs::read_to_string(format!("{FIXTURES}/pois/office.jsonl")).unwrap();
    let world = load_world(&map, &pois).unwrap();
    let config = SimConfig {
        tick_hz: 20,
        ..SimConfig::default()
    };
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            serve(listener, ServeState { world, config }).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

fn connect(addr: SocketAddr) -> Client {
    tungstenite::connect(format!("ws://{addr}/ws")).unwrap().0
}

fn next(ws: &mut Client) -> Value {
    loop {
        match ws.read().unwrap() {
            Message::Text(t) => return serde_json::from_str(&t).unwrap(),
            Message::Close(c) => panic!("closed: {c:?}"),
            _ => {}
        }
    }
}

fn next_of(ws: &mut Client, kind: &str) -> Value {
    loop {
        let m = next(ws);
        if m["type"] == kind {
            return m;
        }
    }
}

fn send(ws: &mut Client, frame: &str) {
    ws.send(Message::Text(frame.into())).unwrap();
}

fn in_conversation(state: &Value) -> bool {
    state["mode"].to_string().contains("Conversation")
}

#[test]
fn long_center_press_shows_up_within_two_snapshots() {
    let addr = start();
    let mut ws = connect(addr);
    let hello = next_of(&mut ws, "state");
    assert_eq!(hello["v"], 1);
    assert!(!in_conversation(&hello));
    send(&mut ws, r#"{"v":1,"type":"button","button":"center","press":"long"}"#);
    let seen: Vec<Value> = (0..2).map(|_| next_of(&mut ws, "state")).collect();
    assert!(seen.iter().any(in_conversation), "{seen:?}");

    send(&mut ws, r#"{"v":1,"type":"say","text":"What is around me?"}"#);
    let answer = next_of(&mut ws, "answer");
    assert!(!answer["text"].as_str().unwrap().is_empty());
    assert!(answer["t"].as_f64().unwrap() > 0.0);
}

#[test]
fn grid_patches_have_gapless_revisions() {
    let addr = start();
    let mut ws = connect(addr);
    let mut last = 0;
    let mut patches = 0;
    for _ in 0..60 {
        let m = next(&mut ws);
        match m["type"].as_str().unwrap() {
            "grid_patch" => {
                let rev = m["revision"].as_u64().unwrap();
                assert_eq!(rev, last + 1);
                last = rev;
                patches += 1;
            }
            "state" => assert_eq!(m["revision"].as_u64().unwrap(), last),
            _ => {}
        }
    }
    assert!(patches >= 1);
}

#[test]
fn malformed_frame_gets_an_error_then_close() {
    let addr = start();
    let mut ws = connect(addr);
    next_of(&mut ws, "state");
    send(&mut ws, r#"{"v":1,"type":"teleport","x":3}"#);
    let mut saw_error = false;
    loop {
        match ws.read() {
            Ok(Message::Text(t)) => {
                let m: Value = serde_json::from_str(&t).unwrap();
                if m["type"] == "error" {
                    assert!(!m["message"].as_str().unwrap().is_empty());
                    saw_error = true;
                }
            }
            Ok(Message::Close(frame)) => {
                assert!(saw_error);
                assert_eq!(frame.unwrap().code, CloseCode::Invalid);
                break;
            }
            Ok(_) => {}
            Err(e) => panic!("connection dropped without a close frame: {e}"),
        }
    }
}

#[test]
fn shutdown_closes_normally() {
    let addr = start();
    let mut ws = connect(addr);
    next_of(&mut ws, "state");
    send(&mut ws, r#"{"v":1,"type":"shutdown"}"#);
    loop {
        if let Message::Close(frame) = ws.read().unwrap() {
            assert_eq!(frame.unwrap().code, CloseCode::Normal);
            break;
        }
    }
}

#[test]
fn sessions_are_independent() {
    let addr = start();
    let mut a = connect(addr);
    let mut b = connect(addr);
    next_of(&mut a, "state");
    next_of(&mut b, "state");
    send(&mut a, r#"{"v":1,"type":"button","button":"center","press":"long"}"#);
    for _ in 0..3 {
        next_of(&mut a, "state");
    }
    for _ in 0..3 {
        assert!(!in_conversation(&next_of(&mut b, "state")));
    }
}
